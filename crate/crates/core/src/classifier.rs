//! Object/background classifier: Bayesian-bootstrap sample synthesis, an
//! explicit feature map for the additive chi-square kernel, and a linear
//! SVM trained and updated online by hinge-loss subgradient steps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::{CountHistogram, Representation};
use crate::{Error, Result};

pub const DEFAULT_MAP_ORDER: usize = 2;
pub const DEFAULT_MAP_PERIOD: f64 = 0.5;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_ONLINE_STEPS: usize = 5;
type SparseFeatures = Vec<(u32, f64)>;

const SVM_MAGIC: &[u8; 8] = b"ETLDSVM1";

/// Draws `n_samples` reweighted copies of `h`: every bin of every sample
/// is `floor(P * h[k])` with its own `P ~ U[0, 1]`.
pub fn bayesian_bootstrap<R: Rng>(h: &CountHistogram, n_samples: usize, rng: &mut R) -> Vec<CountHistogram> {
    (0..n_samples)
        .map(|_| {
            let counts = h
                .counts()
                .iter()
                .map(|&c| (rng.gen::<f64>() * c as f64).floor() as u32)
                .collect();
            CountHistogram::from_counts(counts)
        })
        .collect()
}

/// Exact additive chi-square kernel, `sum 2 x y / (x + y)`.
pub fn chi2_kernel(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .filter(|(a, b)| **a + **b > 0.0)
        .map(|(a, b)| 2.0 * a * b / (a + b))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMapConfig {
    /// Sampled frequencies on each side of zero.
    pub order: usize,
    /// Sampling period of the kernel spectrum.
    pub period: f64,
}

impl Default for FeatureMapConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_MAP_ORDER,
            period: DEFAULT_MAP_PERIOD,
        }
    }
}

/// Homogeneous kernel map for chi-square: each scalar `x > 0` expands to
/// `sqrt(x) * [c0, c_j cos(j L ln x), c_j sin(j L ln x)]_{j=1..n}` where the
/// coefficients sample the kernel's spectrum `sech(pi lambda)` at period `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    cfg: FeatureMapConfig,
    coef: Vec<f64>,
}

impl FeatureMap {
    pub fn new(cfg: FeatureMapConfig) -> Result<Self> {
        if cfg.order < 1 || !(cfg.period > 0.0 && cfg.period.is_finite()) {
            return Err(Error::Config(format!(
                "feature map needs order >= 1 and period > 0, got {cfg:?}"
            )));
        }
        let spectrum = |lambda: f64| 1.0 / (std::f64::consts::PI * lambda).cosh();
        let mut coef = vec![(cfg.period * spectrum(0.0)).sqrt()];
        coef.extend((1..=cfg.order).map(|j| (2.0 * cfg.period * spectrum(j as f64 * cfg.period)).sqrt()));
        Ok(Self { cfg, coef })
    }

    pub fn config(&self) -> FeatureMapConfig {
        self.cfg
    }

    /// Components per input bin, `2n + 1`.
    pub fn width(&self) -> usize {
        2 * self.cfg.order + 1
    }

    /// Writes the `2n + 1` components of scalar `x` into `out`.
    #[inline]
    pub fn map_scalar(&self, x: f64, out: &mut [f64]) {
        if x <= 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let s = x.sqrt();
        let lx = x.ln();
        out[0] = s * self.coef[0];
        for j in 1..=self.cfg.order {
            let (sin, cos) = (j as f64 * self.cfg.period * lx).sin_cos();
            let a = s * self.coef[j];
            out[2 * j - 1] = a * cos;
            out[2 * j] = a * sin;
        }
    }

    pub fn map(&self, rep: &Representation) -> Result<Vec<f64>> {
        if let Some(v) = rep.values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain(format!("feature map input must be finite and >= 0, got {v}")));
        }
        let w = self.width();
        let mut out = vec![0.0; rep.values.len() * w];
        for (x, chunk) in rep.values.iter().zip(out.chunks_exact_mut(w)) {
            self.map_scalar(*x, chunk);
        }
        Ok(out)
    }

    /// Sparse map of a count histogram: `(mapped index, value)` for every
    /// non-zero bin of its normalization.
    fn map_counts_sparse(&self, h: &CountHistogram, out: &mut Vec<(u32, f64)>) {
        out.clear();
        if h.n_events() == 0 {
            return;
        }
        let inv = 1.0 / h.n_events() as f64;
        let w = self.width();
        let mut buf = vec![0.0; w];
        for (k, &c) in h.counts().iter().enumerate() {
            if c > 0 {
                self.map_scalar(c as f64 * inv, &mut buf);
                out.extend(buf.iter().enumerate().map(|(i, &v)| ((k * w + i) as u32, v)));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmTrainConfig {
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

/// Linear SVM over chi-square-mapped histograms.
///
/// Training is Pegasos-style: step size `1 / (lambda t)`, the bias treated
/// as the weight of a constant unit feature. `t` keeps counting through
/// online updates.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    map: FeatureMap,
    weights: Vec<f64>,
    bias: f64,
    lambda: f64,
    step: u64,
}

impl SvmModel {
    pub fn new(map: FeatureMap, k: usize, lambda: f64) -> Self {
        let dim = k * map.width();
        Self {
            map,
            weights: vec![0.0; dim],
            bias: 0.0,
            lambda,
            step: 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn mapped_dim(&self) -> usize {
        self.weights.len()
    }

    /// Schedule position (number of subgradient steps taken so far).
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Resumes the step-size schedule at `step`; loaded models start at 0,
    /// which would make the next online step overwrite the weights.
    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// `<w, Psi(normalize(h))> + b`.
    pub fn score(&self, h: &CountHistogram) -> f64 {
        self.score_counts(h.counts(), h.n_events())
    }

    /// Scores raw counts whose sum is `n_events`.
    pub fn score_counts(&self, counts: &[u32], n_events: u64) -> f64 {
        if n_events == 0 {
            return self.bias;
        }
        let inv = 1.0 / n_events as f64;
        let w = self.map.width();
        let mut buf = [0.0f64; 16];
        let mut heap;
        let buf: &mut [f64] = if w <= buf.len() {
            &mut buf[..w]
        } else {
            heap = vec![0.0; w];
            &mut heap
        };
        let mut s = self.bias;
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                self.map.map_scalar(c as f64 * inv, buf);
                let wk = &self.weights[k * w..(k + 1) * w];
                s += wk.iter().zip(buf.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        s
    }

    /// Scores an already-normalized representation.
    pub fn score_representation(&self, rep: &Representation) -> Result<f64> {
        let mapped = self.map.map(rep)?;
        Ok(self.bias + self.weights.iter().zip(&mapped).map(|(a, b)| a * b).sum::<f64>())
    }

    fn sparse_dot(&self, x: &[(u32, f64)]) -> f64 {
        self.bias + x.iter().map(|&(i, v)| self.weights[i as usize] * v).sum::<f64>()
    }

    /// One subgradient step on a violating example with weight `c`.
    fn step_on(&mut self, x: &[(u32, f64)], label: f64, c: f64) {
        self.step += 1;
        let eta = 1.0 / (self.lambda * self.step as f64);
        let decay = 1.0 - eta * self.lambda;
        if decay != 1.0 {
            self.weights.iter_mut().for_each(|w| *w *= decay);
            self.bias *= decay;
        }
        let g = eta * c * label;
        for &(i, v) in x {
            self.weights[i as usize] += g * v;
        }
        self.bias += g;
    }

    /// Applies up to `steps` subgradient steps on `h` with label `+1`/`-1`.
    /// Stops early (leaving the model unchanged) once the example satisfies
    /// the margin.
    pub fn online_update(&mut self, h: &CountHistogram, label: i8, steps: usize) -> usize {
        let y = if label >= 0 { 1.0 } else { -1.0 };
        let mut x = Vec::new();
        self.map.map_counts_sparse(h, &mut x);
        let mut applied = 0;
        for _ in 0..steps {
            if y * self.sparse_dot(&x) >= 1.0 {
                break;
            }
            self.step_on(&x, y, 1.0);
            applied += 1;
        }
        applied
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SVM_MAGIC)?;
        w.write_all(&(self.weights.len() as u32).to_le_bytes())?;
        for v in self.weights.iter().chain(std::iter::once(&self.bias)) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads weights and bias; the feature map must match the one used in
    /// training (it is not stored in the file).
    pub fn load(path: &Path, map: FeatureMap, lambda: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let bad = |msg: String| Error::Format { path: path.to_owned(), msg };
        if bytes.len() < 12 || &bytes[..8] != SVM_MAGIC {
            return Err(bad("missing ETLDSVM1 header".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + (dim + 1) * 8 {
            return Err(bad("payload length does not match mapped dimension".into()));
        }
        if !dim.is_multiple_of(map.width()) {
            return Err(bad(format!("mapped dimension {dim} incompatible with map width {}", map.width())));
        }
        let mut values: Vec<f64> = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bias = values.pop().expect("dim + 1 values");
        Ok(Self {
            map,
            weights: values,
            bias,
            lambda,
            step: 0,
        })
    }
}

/// Fits a linear SVM on the mapped, normalized samples by epoch-wise
/// subgradient descent with a seeded shuffle. Losses are weighted inversely
/// to class size.
pub fn train_svm(
    pos: &[CountHistogram],
    neg: &[CountHistogram],
    map_cfg: FeatureMapConfig,
    train: SvmTrainConfig,
) -> Result<SvmModel> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Training(format!(
            "svm needs samples of both classes ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    if train.lambda.is_nan() || train.lambda <= 0.0 {
        return Err(Error::Config("svm regularization must be positive".into()));
    }
    let k = pos[0].k();
    if pos.iter().chain(neg).any(|h| h.k() != k) {
        return Err(Error::Training("samples disagree on histogram size".into()));
    }
    let map = FeatureMap::new(map_cfg)?;
    let total = (pos.len() + neg.len()) as f64;
    let w_pos = total / (2.0 * pos.len() as f64);
    let w_neg = total / (2.0 * neg.len() as f64);

    // (sparse mapped features, label, class weight)
    let mut examples: Vec<(SparseFeatures, f64, f64)> = Vec::with_capacity(pos.len() + neg.len());
    for (set, label, weight) in [(pos, 1.0, w_pos), (neg, -1.0, w_neg)] {
        for h in set {
            let mut x = Vec::new();
            map.map_counts_sparse(h, &mut x);
            examples.push((x, label, weight));
        }
    }

    // Weights are kept as `scale * v` so the shrink of every step is O(1);
    // the returned model averages the iterates of the final epoch.
    let dim = k * map.width();
    let mut v = vec![0.0; dim];
    let mut v_bias = 0.0;
    let mut scale = 1.0;
    let mut avg = vec![0.0; dim];
    let mut avg_bias = 0.0;
    let mut averaged = 0u64;
    let mut t = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y, c) = &examples[i];
            let margin = y * scale * (v_bias + x.iter().map(|&(j, xv)| v[j as usize] * xv).sum::<f64>());
            t += 1;
            let eta = 1.0 / (train.lambda * t as f64);
            scale *= 1.0 - eta * train.lambda;
            if scale == 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                v_bias = 0.0;
                scale = 1.0;
            } else if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                v_bias *= scale;
                scale = 1.0;
            }
            if margin < 1.0 {
                let g = eta * c * y / scale;
                for &(j, xv) in x {
                    v[j as usize] += g * xv;
                }
                v_bias += g;
            }
            if epoch + 1 == train.epochs {
                avg.iter_mut().zip(&v).for_each(|(a, w)| *a += scale * w);
                avg_bias += scale * v_bias;
                averaged += 1;
            }
        }
    }
    let mut model = SvmModel::new(map, k, train.lambda);
    if averaged > 0 {
        let inv = 1.0 / averaged as f64;
        model.weights = avg.into_iter().map(|a| a * inv).collect();
        model.bias = avg_bias * inv;
    }
    model.step = t;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hist(rng: &mut ChaCha8Rng, k: usize, mass: u32, support: std::ops::Range<usize>) -> CountHistogram {
        let mut h = CountHistogram::new(k);
        for _ in 0..mass {
            h.accumulate(rng.gen_range(support.clone())).unwrap();
        }
        h
    }

    #[test]
    fn bootstrap_of_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in bayesian_bootstrap(&CountHistogram::new(8), 20, &mut rng) {
            assert_eq!(s.n_events(), 0);
        }
    }

    #[test]
    fn bootstrap_dominated_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hist(&mut rng, 50, 300, 0..50);
        let a = bayesian_bootstrap(&h, 100, &mut ChaCha8Rng::seed_from_u64(4));
        let b = bayesian_bootstrap(&h, 100, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        for s in &a {
            assert!(s.counts().iter().zip(h.counts()).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn bootstrap_mean_mass_is_half() {
        // E[floor(P c)] = (c - 1) / 2 for a count c >= 1, so the expected
        // mass is (n - nonzero bins) / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for support in [12, 60] {
            let h = random_hist(&mut rng, 60, 840, 0..support);
            let nonzero = h.counts().iter().filter(|&&c| c > 0).count() as f64;
            let expected = (840.0 - nonzero) / 2.0;
            let samples = bayesian_bootstrap(&h, 840, &mut rng);
            let mean = samples.iter().map(|s| s.n_events() as f64).sum::<f64>() / samples.len() as f64;
            assert!((mean - expected).abs() <= 0.01 * expected, "mean mass {mean} vs {expected}");
            if support == 12 {
                assert!((mean - 420.0).abs() <= 0.02 * 420.0);
            }
        }
    }

    #[test]
    fn bootstrap_per_bin_expectation_within_floor_bias() {
        let h = CountHistogram::from_counts(vec![0, 1, 2, 7, 40, 301]);
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = bayesian_bootstrap(&h, n, &mut rng);
        for (k, &c) in h.counts().iter().enumerate() {
            let vals: Vec<f64> = samples.iter().map(|s| s.counts()[k] as f64).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sigma = (var / n as f64).sqrt();
            let (lo, hi) = (c as f64 / 2.0 - 1.0, c as f64 / 2.0);
            assert!(mean >= lo - 3.0 * sigma && mean <= hi + 3.0 * sigma, "bin {k}: {mean} not in [{lo},{hi}]");
        }
    }

    #[test]
    fn map_of_indicator_and_zero() {
        let map = FeatureMap::new(FeatureMapConfig::default()).unwrap();
        let mut e1 = vec![0.0; 10];
        e1[1] = 1.0;
        let rep = Representation { values: e1.clone() };
        let psi = map.map(&rep).unwrap();
        assert_eq!(psi.len(), 10 * map.width());
        let ip: f64 = psi.iter().map(|v| v * v).sum();
        assert!((ip - chi2_kernel(&e1, &e1)).abs() <= 0.02, "{ip}");
        let zero = map.map(&Representation { values: vec![0.0; 10] }).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(matches!(
            map.map(&Representation { values: vec![0.5, -0.1] }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn first_order_map_underestimates_diagonal() {
        // With a single sampled frequency at L = 0.5 the diagonal is
        // L (1 + 2 sech(pi L)) ~ 0.898, a 10% deficit.
        let map = FeatureMap::new(FeatureMapConfig { order: 1, period: 0.5 }).unwrap();
        let psi = map.map(&Representation { values: vec![1.0] }).unwrap();
        let ip: f64 = psi.iter().map(|v| v * v).sum();
        let expected = 0.5 * (1.0 + 2.0 / (std::f64::consts::PI * 0.5).cosh());
        assert!((ip - expected).abs() < 1e-12);
        assert!(ip < 0.9);
    }

    #[test]
    fn default_map_tracks_exact_kernel() {
        let map = FeatureMap::new(FeatureMapConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
            let mut y: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
            let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
            x.iter_mut().for_each(|v| *v /= sx);
            y.iter_mut().for_each(|v| *v /= sy);
            let px = map.map(&Representation { values: x.clone() }).unwrap();
            let py = map.map(&Representation { values: y.clone() }).unwrap();
            let approx: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum();
            let exact = chi2_kernel(&x, &y);
            assert!((approx - exact).abs() / exact < 0.02);
        }
    }

    #[test]
    fn separable_sets_are_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pos: Vec<_> = (0..120).map(|_| random_hist(&mut rng, 40, 50, 0..25)).collect();
        let neg: Vec<_> = (0..300).map(|_| random_hist(&mut rng, 40, 80, 15..40)).collect();
        let model = train_svm(&pos, &neg, FeatureMapConfig::default(), SvmTrainConfig::default()).unwrap();
        assert!(pos.iter().all(|h| model.score(h) > 0.0));
        assert!(neg.iter().all(|h| model.score(h) < 0.0));
        assert_eq!(model.score(&CountHistogram::new(40)), model.bias());
        assert_eq!(model.mapped_dim(), 40 * 5);
        let again = train_svm(&pos, &neg, FeatureMapConfig::default(), SvmTrainConfig::default()).unwrap();
        assert_eq!(model, again);
        let h = &pos[0];
        assert_eq!(model.score(h), model.score(h));
        let via_rep = model.score_representation(&h.normalize()).unwrap();
        assert!((via_rep - model.score(h)).abs() < 1e-9);
    }

    #[test]
    fn identical_classes_are_indiscriminable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Enough steps for the 1/(lambda t) schedule to settle.
        let pos: Vec<_> = (0..2000).map(|_| random_hist(&mut rng, 30, 40, 0..30)).collect();
        let neg = pos.clone();
        let model = train_svm(&pos, &neg, FeatureMapConfig::default(), SvmTrainConfig::default()).unwrap();
        let correct = pos.iter().filter(|h| model.score(h) > 0.0).count()
            + neg.iter().filter(|h| model.score(h) < 0.0).count();
        let acc = correct as f64 / 4000.0;
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
        let mut abs: Vec<f64> = pos.iter().map(|h| model.score(h).abs()).collect();
        abs.sort_by(f64::total_cmp);
        assert!(abs[1999] < 0.5, "max |score| {}", abs[1999]);
    }

    #[test]
    fn empty_class_rejected() {
        let h = CountHistogram::from_counts(vec![1, 2]);
        let r = train_svm(&[h], &[], FeatureMapConfig::default(), SvmTrainConfig::default());
        assert!(matches!(r, Err(Error::Training(_))));
    }

    fn small_model() -> (SvmModel, CountHistogram) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pos: Vec<_> = (0..50).map(|_| random_hist(&mut rng, 20, 30, 0..12)).collect();
        let neg: Vec<_> = (0..50).map(|_| random_hist(&mut rng, 20, 30, 8..20)).collect();
        let model = train_svm(&pos, &neg, FeatureMapConfig::default(), SvmTrainConfig::default()).unwrap();
        // Mixed histogram sits near the boundary.
        let probe = random_hist(&mut rng, 20, 30, 4..16);
        (model, probe)
    }

    #[test]
    fn online_update_respects_margin() {
        let (mut model, _) = small_model();
        let strong = CountHistogram::from_counts((0..20).map(|k| u32::from(k < 8) * 5).collect());
        assert!(model.score(&strong) >= 1.0, "{}", model.score(&strong));
        let before = model.clone();
        assert_eq!(model.online_update(&strong, 1, 5), 0);
        assert_eq!(model, before);
    }

    #[test]
    fn online_update_raises_violating_score() {
        let (mut model, probe) = small_model();
        let s0 = model.score(&probe);
        assert!(s0 < 1.0);
        assert_eq!(model.online_update(&probe, 1, 1), 1);
        assert!(model.score(&probe) > s0);
        for _ in 0..10_000 {
            if model.online_update(&probe, 1, 5) == 0 {
                break;
            }
        }
        assert!(model.score(&probe) >= 1.0);
    }

    #[test]
    fn model_file_round_trip() {
        let (model, probe) = small_model();
        let path = std::env::temp_dir().join(format!("etld-svm-{}.bin", std::process::id()));
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"ETLDSVM1");
        assert_eq!(&bytes[8..12], &(model.mapped_dim() as u32).to_le_bytes());
        let back = SvmModel::load(&path, model.feature_map().clone(), DEFAULT_LAMBDA).unwrap();
        assert_eq!(back.weights(), model.weights());
        assert_eq!(back.score(&probe), model.score(&probe));
        std::fs::remove_file(&path).ok();
    }
}
