//! Visual-word codebook: k-means training, nearest-centroid quantization
//! and codeword count histograms.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::Serialize;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

pub const DEFAULT_CODEBOOK_SIZE: usize = 500;
pub const MAX_LLOYD_ITERATIONS: usize = 100;
const CODEBOOK_MAGIC: &[u8; 7] = b"ETLDCB1";

/// `k` centroids of dimension `d`, stored row-major by centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    centroids: Vec<f64>,
}

/// Per-run k-means diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansReport {
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared distance to the assigned centroid after each assignment step.
    pub distortion: Vec<f64>,
}

impl Codebook {
    pub fn from_centroids(k: usize, d: usize, centroids: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("codebook needs K >= 2, got {k}")));
        }
        if d == 0 || centroids.len() != k * d {
            return Err(Error::Config(format!(
                "expected {k}x{d} centroid values, got {}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("centroids must be finite".into()));
        }
        Ok(Self { k, d, centroids })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.d..(k + 1) * self.d]
    }

    /// Index of the nearest centroid under Euclidean distance; ties go to
    /// the smallest index.
    ///
    /// Each partial sum is abandoned once it reaches the best distance so
    /// far. Terms are non-negative and accumulated in the same order as a
    /// full scan, so the result is identical to exhaustive search.
    pub fn quantize(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.d);
        let mut best = f64::INFINITY;
        let mut best_k = 0;
        for (k, c) in self.centroids.chunks_exact(self.d).enumerate() {
            let mut s = 0.0;
            for (xs, cs) in x.chunks(8).zip(c.chunks(8)) {
                for (a, b) in xs.iter().zip(cs) {
                    let t = a - b;
                    s += t * t;
                }
                if s >= best {
                    break;
                }
            }
            if s < best {
                best = s;
                best_k = k;
            }
        }
        best_k
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODEBOOK_MAGIC)?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        for v in &self.centroids {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let bad = |msg: &str| Error::Format {
            path: path.to_owned(),
            msg: msg.to_owned(),
        };
        let header = CODEBOOK_MAGIC.len() + 8;
        if bytes.len() < header || &bytes[..CODEBOOK_MAGIC.len()] != CODEBOOK_MAGIC {
            return Err(bad("missing ETLDCB1 header"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let k = word(CODEBOOK_MAGIC.len());
        let d = word(CODEBOOK_MAGIC.len() + 4);
        if bytes.len() != header + k * d * 8 {
            return Err(bad("payload length does not match K*d"));
        }
        let centroids = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_centroids(k, d, centroids).map_err(|e| bad(&e.to_string()))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn count_distinct(descriptors: &[Vec<f64>]) -> usize {
    descriptors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Lloyd's k-means with k-means++ seeding, capped at
/// [`MAX_LLOYD_ITERATIONS`] and stopping once no assignment changes.
pub fn train_codebook(descriptors: &[Vec<f64>], k: usize, seed: u64) -> Result<(Codebook, KMeansReport)> {
    if k < 2 {
        return Err(Error::Config(format!("codebook needs K >= 2, got {k}")));
    }
    let d = descriptors
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Training("no descriptors to cluster".into()))?;
    if d == 0 || descriptors.iter().any(|v| v.len() != d) {
        return Err(Error::Training("descriptors must share a non-zero dimension".into()));
    }
    let distinct = count_distinct(descriptors);
    if distinct < k {
        return Err(Error::Training(format!(
            "{distinct} distinct descriptors cannot seed {k} clusters"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(descriptors, k, &mut rng);
    let mut assignment = vec![usize::MAX; descriptors.len()];
    let mut report = KMeansReport {
        iterations: 0,
        converged: false,
        distortion: Vec::new(),
    };

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let cb = Codebook { k, d, centroids };
        let (next, dist): (Vec<usize>, Vec<f64>) = descriptors
            .par_iter()
            .map(|x| {
                let j = cb.quantize(x);
                (j, sq_dist(x, cb.centroid(j)))
            })
            .unzip();
        centroids = cb.centroids;
        report.iterations += 1;
        report.distortion.push(dist.iter().sum::<f64>() / descriptors.len() as f64);
        let changed = next != assignment;
        assignment = next;
        if !changed {
            report.converged = true;
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (x, &j) in descriptors.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids[j * d..(j + 1) * d].iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *c = s * inv;
                }
            }
        }
    }
    Ok((Codebook::from_centroids(k, d, centroids)?, report))
}

fn seed_plus_plus(descriptors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = descriptors[0].len();
    let n = descriptors.len();
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&descriptors[first]);
    let mut nearest: Vec<f64> = descriptors.par_iter().map(|x| sq_dist(x, &descriptors[first])).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            // Unreachable with >= k distinct points; kept total for safety.
            rng.gen_range(0..n)
        };
        let c = &descriptors[pick];
        centroids.extend_from_slice(c);
        nearest
            .par_iter_mut()
            .zip(descriptors.par_iter())
            .for_each(|(best, x)| *best = best.min(sq_dist(x, c)));
    }
    centroids
}

/// Codeword counts for one window: `counts[k]` events quantized to word `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountHistogram {
    counts: Vec<u32>,
    n_events: u64,
}

impl CountHistogram {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![0; k],
            n_events: 0,
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        let n_events = counts.iter().map(|&c| c as u64).sum();
        Self { counts, n_events }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn accumulate(&mut self, k: usize) -> Result<()> {
        let size = self.counts.len();
        let slot = self
            .counts
            .get_mut(k)
            .ok_or_else(|| Error::Domain(format!("cluster index {k} outside codebook of size {size}")))?;
        *slot += 1;
        self.n_events += 1;
        Ok(())
    }

    pub fn add(&mut self, other: &CountHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_events += other.n_events;
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.n_events = 0;
    }

    pub fn normalize(&self) -> Representation {
        let values = if self.n_events == 0 {
            vec![0.0; self.counts.len()]
        } else {
            let inv = 1.0 / self.n_events as f64;
            self.counts.iter().map(|&c| c as f64 * inv).collect()
        };
        Representation { values }
    }
}

/// L1-normalized codeword histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub values: Vec<f64>,
}
