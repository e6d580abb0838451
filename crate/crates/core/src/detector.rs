//! Data-driven detector: codewords that the object uses more than the
//! background, a per-pixel detection matrix fed by events quantized to
//! those codewords, and a global box-sum search over that matrix.

use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::codebook::CountHistogram;
use crate::event_io::{Event, Roi, SensorGeometry};
use crate::{Error, Result};

/// The set of object codewords, stored as a membership mask over `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorModel {
    mask: Vec<bool>,
    clusters: Vec<usize>,
}

/// Diagnostics from detector training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorReport {
    pub positive_samples: usize,
    pub negative_samples: usize,
    pub positive_mass: u64,
    pub negative_mass: u64,
    /// Per-codeword `sum(pos) - sum(neg)`.
    pub difference: Vec<i64>,
}

impl DetectorReport {
    /// Ratio of total bootstrap mass, negative over positive. Large values
    /// bias cluster selection towards background.
    pub fn mass_imbalance(&self) -> f64 {
        self.negative_mass as f64 / self.positive_mass.max(1) as f64
    }
}

impl DetectorModel {
    pub fn from_clusters(k: usize, clusters: &[usize]) -> Result<Self> {
        let mut mask = vec![false; k];
        for &c in clusters {
            *mask
                .get_mut(c)
                .ok_or_else(|| Error::Domain(format!("cluster {c} outside codebook of size {k}")))? = true;
        }
        let clusters = (0..k).filter(|&i| mask[i]).collect();
        Ok(Self { mask, clusters })
    }

    pub fn clusters(&self) -> &[usize] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.mask.get(k).copied().unwrap_or(false)
    }
}

/// Selects every codeword whose summed positive bootstrap count strictly
/// exceeds its summed negative count.
pub fn train_detector(pos: &[CountHistogram], neg: &[CountHistogram]) -> Result<(DetectorModel, DetectorReport)> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Training("detector needs positive and negative samples".into()));
    }
    let k = pos[0].k();
    let mut difference = vec![0i64; k];
    for h in pos {
        for (d, &c) in difference.iter_mut().zip(h.counts()) {
            *d += c as i64;
        }
    }
    for h in neg {
        for (d, &c) in difference.iter_mut().zip(h.counts()) {
            *d -= c as i64;
        }
    }
    let clusters: Vec<usize> = (0..k).filter(|&i| difference[i] > 0).collect();
    let report = DetectorReport {
        positive_samples: pos.len(),
        negative_samples: neg.len(),
        positive_mass: pos.iter().map(CountHistogram::n_events).sum(),
        negative_mass: neg.iter().map(CountHistogram::n_events).sum(),
        difference,
    };
    if clusters.is_empty() {
        return Err(Error::Training(
            "no codeword is assigned to the object more often than to the background".into(),
        ));
    }
    if clusters.len() > k / 2 {
        warn!("detector selected {} of {k} codewords; object and background barely differ", clusters.len());
    }
    Ok((DetectorModel::from_clusters(k, &clusters)?, report))
}

/// Detection matrix `M` (row-major, `height x width`) plus hit count.
#[derive(Debug, Clone)]
pub struct DetectionState {
    geom: SensorGeometry,
    matrix: Vec<u32>,
    count: u64,
    threshold: u64,
}

/// Outcome of a global search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub roi: Roi,
    pub activation: u64,
}

impl DetectionState {
    pub fn new(geom: SensorGeometry, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
        }
        Ok(Self {
            geom,
            matrix: vec![0; geom.pixel_count()],
            count: 0,
            threshold: (tau * geom.pixel_count() as f64).ceil() as u64,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn matrix(&self) -> &[u32] {
        &self.matrix
    }

    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.matrix[(y * self.geom.width + x) as usize]
    }

    pub fn is_ready(&self) -> bool {
        self.count > self.threshold
    }

    /// Records the event if its codeword is an object cluster. Returns
    /// `true` once the hit count exceeds the threshold.
    #[inline]
    pub fn ingest_event(&mut self, e: &Event, k: usize, model: &DetectorModel) -> bool {
        if model.contains(k) {
            self.matrix[e.y as usize * self.geom.width as usize + e.x as usize] += 1;
            self.count += 1;
        }
        self.is_ready()
    }

    pub fn clear(&mut self) {
        self.matrix.iter_mut().for_each(|m| *m = 0);
        self.count = 0;
    }

    /// Box sums of every `rows x cols` placement, shape
    /// `(h - rows + 1) x (w - cols + 1)`, via one summed-area table.
    pub fn activation_map(&self, rows: u32, cols: u32) -> Result<Vec<u64>> {
        let (w, h) = (self.geom.width as usize, self.geom.height as usize);
        let (m, n) = (rows as usize, cols as usize);
        if m == 0 || n == 0 || m > h || n > w {
            return Err(Error::Config(format!("window {rows}x{cols} does not fit {h}x{w} sensor")));
        }
        let iw = w + 1;
        let mut sat = vec![0u64; iw * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += self.matrix[y * w + x] as u64;
                sat[(y + 1) * iw + x + 1] = sat[y * iw + x + 1] + row;
            }
        }
        let (ah, aw) = (h - m + 1, w - n + 1);
        let mut out = Vec::with_capacity(ah * aw);
        for r in 0..ah {
            for s in 0..aw {
                out.push(sat[(r + m) * iw + s + n] + sat[r * iw + s] - sat[r * iw + s + n] - sat[(r + m) * iw + s]);
            }
        }
        Ok(out)
    }

    /// Finds the `rows x cols` window with the largest box sum (first in
    /// row-major order on ties), then clears the matrix and count.
    pub fn global_search(&mut self, rows: u32, cols: u32) -> Result<Detection> {
        let map = self.activation_map(rows, cols)?;
        let aw = (self.geom.width - cols + 1) as usize;
        let mut best = 0;
        for (i, &v) in map.iter().enumerate() {
            if v > map[best] {
                best = i;
            }
        }
        let roi = Roi::new((best % aw) as u32, (best / aw) as u32, cols, rows);
        self.clear();
        Ok(Detection {
            roi,
            activation: map[best],
        })
    }

    /// Binary PGM (P5) heat map of `M`, saturating at 255.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", self.geom.width, self.geom.height)?;
        let bytes: Vec<u8> = self.matrix.iter().map(|&v| v.min(255) as u8).collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }
}
