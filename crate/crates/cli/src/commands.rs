use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use etld::codebook::{train_codebook, KMeansReport};
use etld::descriptor::{LogPolarGrid, RecentBuffer};
use etld::eval::{evaluate, write_intervals, EvalReport};
use etld::event_io::{read_events, synthesize_sequence, write_events, SynthConfig};
use etld::pipeline::{training_split, write_transitions, EtldState, TrainingReport, Transition};
use etld::tracker::{read_track_log, write_track_log, TrackState};
use etld::{AnnotationTrack, EtldConfig, Event, Roi, SensorGeometry, TrackOutput};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{BenchArgs, CodebookArgs, EvalArgs, SweepArgs, SweepParam, SynthArgs, TrackArgs};
use crate::error::{CliError, Result};

pub const TRACK_LOG: &str = "track.csv";
pub const TRANSITIONS: &str = "transitions.csv";
pub const REPORT: &str = "report.json";
pub const INTERVALS: &str = "intervals.csv";
pub const MANIFEST: &str = "manifest.json";
pub const SWEEP: &str = "sweep.csv";
pub const BENCH: &str = "bench.json";
pub const CODEBOOK: &str = "codebook.bin";
pub const SVM: &str = "svm.bin";
pub const SYNTH_EVENTS: &str = "events.txt";
pub const SYNTH_ANNOTATIONS: &str = "annotations.csv";
pub const SYNTH_SCENE: &str = "scene.cfg";

/// Median per-event latency the tracker is expected to reach.
pub const LATENCY_TARGET_US: f64 = 45.0;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<EtldConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub inputs: Vec<InputDigest>,
}

impl Manifest {
    fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: "etld".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            roi: None,
            config: None,
            overlap_threshold: None,
            sweep: None,
            scene: None,
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn require_input(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("overlap threshold must lie in [0, 1], got {t}")))
    }
}

fn check_roi(roi: &Roi, geom: &SensorGeometry) -> Result<()> {
    roi.validate(geom).map_err(|e| CliError::Usage(format!("--roi {roi}: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub train_events: usize,
    pub inside_events: u64,
    pub outside_events: u64,
    pub kmeans_iterations: usize,
    pub kmeans_converged: bool,
    pub kmeans_distortion: Option<f64>,
    pub object_clusters: usize,
    pub seed_score: f64,
    pub roi_score: f64,
    pub background_score: f64,
    /// Negative over positive bootstrap mass seen by the detector.
    pub detector_mass_imbalance: f64,
}

impl From<&TrainingReport> for TrainingSummary {
    fn from(r: &TrainingReport) -> Self {
        Self {
            train_events: r.train_events,
            inside_events: r.inside_events,
            outside_events: r.outside_events,
            kmeans_iterations: r.kmeans.iterations,
            kmeans_converged: r.kmeans.converged,
            kmeans_distortion: r.kmeans.distortion.last().copied(),
            object_clusters: r.object_clusters,
            seed_score: r.seed_score,
            roi_score: r.roi_score,
            background_score: r.background_score,
            detector_mass_imbalance: r.detector.mass_imbalance(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub events: usize,
    pub initial_roi: String,
    pub training: TrainingSummary,
    pub rows: usize,
    pub lost_rows: usize,
    pub transitions: usize,
    pub online_updates: u64,
    pub final_mode: String,
    pub final_roi: String,
    pub mean_score: f64,
    pub eval: Option<EvalReport>,
}

/// Result of one train-then-track pass.
#[derive(Debug, Clone)]
pub struct TrackRun {
    pub track: Vec<TrackOutput>,
    pub transitions: Vec<Transition>,
    pub state: EtldState,
    pub report: TrackReport,
}

/// Trains on the first `cfg.train_us` of `events` and tracks the rest.
pub fn track_events(
    events: &[Event],
    roi: Roi,
    cfg: &EtldConfig,
    annotations: Option<&AnnotationTrack>,
    overlap_threshold: f64,
    dump_dir: Option<PathBuf>,
) -> Result<TrackRun> {
    let split = training_split(events, cfg.train_us);
    let (mut state, training) = EtldState::train(&events[..split], roi, cfg)?;
    state.dump_detections_to(dump_dir);
    let mut track = vec![state.initial_output()];
    for e in &events[split..] {
        if let Some(row) = state.step(e) {
            track.push(row);
        }
    }
    let eval = match annotations {
        Some(ann) => Some(evaluate(&track, ann, overlap_threshold)?),
        None => None,
    };
    let transitions = state.transitions().to_vec();
    let report = TrackReport {
        events: events.len(),
        initial_roi: roi.to_string(),
        training: TrainingSummary::from(&training),
        rows: track.len(),
        lost_rows: track.iter().filter(|r| r.state == TrackState::Lost).count(),
        transitions: transitions.len(),
        online_updates: state.online_updates(),
        final_mode: state.mode().to_string(),
        final_roi: state.roi().to_string(),
        mean_score: state.mean_score(),
        eval,
    };
    Ok(TrackRun {
        track,
        transitions,
        state,
        report,
    })
}

fn write_track_outputs(dir: &Path, run: &TrackRun) -> Result<()> {
    write_track_log(&dir.join(TRACK_LOG), &run.track)?;
    write_transitions(&dir.join(TRANSITIONS), &run.transitions)?;
    write_json(&dir.join(REPORT), &run.report)?;
    if let Some(eval) = &run.report.eval {
        write_intervals(&dir.join(INTERVALS), eval)?;
    }
    Ok(())
}

pub fn cmd_track(args: &TrackArgs) -> Result<TrackReport> {
    let cfg = args.model.config()?;
    let geom = cfg.geometry()?;
    check_roi(&args.roi, &geom)?;
    check_threshold(args.overlap_threshold)?;
    require_input(&args.events)?;
    if let Some(path) = &args.annotations {
        require_input(path)?;
    }
    let events = read_events(&args.events, &geom)?;
    let annotations = match &args.annotations {
        Some(path) => Some(AnnotationTrack::load(path, &geom)?),
        None => None,
    };
    fs::create_dir_all(&args.out_dir)?;
    let dump_dir = if args.dump_detection {
        let dir = args.out_dir.join("detections");
        fs::create_dir_all(&dir)?;
        Some(dir)
    } else {
        None
    };
    let run = track_events(&events, args.roi, &cfg, annotations.as_ref(), args.overlap_threshold, dump_dir)?;
    write_track_outputs(&args.out_dir, &run)?;
    if args.save_models {
        run.state.codebook().save(&args.out_dir.join(CODEBOOK))?;
        run.state.svm().save(&args.out_dir.join(SVM))?;
    }
    let mut manifest = Manifest::new("track", cfg.seed);
    manifest.roi = Some(args.roi.to_string());
    manifest.config = Some(cfg);
    manifest.overlap_threshold = Some(args.overlap_threshold);
    manifest.input("events", &args.events)?;
    if let Some(path) = &args.annotations {
        manifest.input("annotations", path)?;
    }
    write_json(&args.out_dir.join(MANIFEST), &manifest)?;
    Ok(run.report)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    check_threshold(args.overlap_threshold)?;
    let geom = SensorGeometry::new(args.sensor_width, args.sensor_height)?;
    require_input(&args.track)?;
    require_input(&args.annotations)?;
    let log = read_track_log(&args.track)?;
    let ann = AnnotationTrack::load(&args.annotations, &geom)?;
    let report = evaluate(&log, &ann, args.overlap_threshold)?;
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(REPORT), &report)?;
        write_intervals(&dir.join(INTERVALS), &report)?;
        let mut manifest = Manifest::new("eval", 0);
        manifest.overlap_threshold = Some(args.overlap_threshold);
        manifest.input("track", &args.track)?;
        manifest.input("annotations", &args.annotations)?;
        write_json(&dir.join(MANIFEST), &manifest)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CodebookSummary {
    pub train_events: usize,
    pub codebook_size: usize,
    pub dimension: usize,
    pub kmeans: KMeansReport,
}

pub fn cmd_codebook(args: &CodebookArgs) -> Result<CodebookSummary> {
    let cfg = args.model.config()?;
    let geom = cfg.geometry()?;
    require_input(&args.events)?;
    let events = read_events(&args.events, &geom)?;
    let split = training_split(&events, cfg.train_us);
    let grid = LogPolarGrid::new(cfg.rings, cfg.wedges, cfg.r_min, cfg.r_max)?;
    let mut buffer = RecentBuffer::new(geom, &grid, cfg.recent_capacity)?;
    let descriptors: Vec<Vec<f64>> = events[..split].iter().map(|e| buffer.describe(e).values).collect();
    let (codebook, kmeans) = train_codebook(&descriptors, cfg.codebook_size, cfg.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    codebook.save(&args.out)?;
    Ok(CodebookSummary {
        train_events: split,
        codebook_size: codebook.k(),
        dimension: codebook.dim(),
        kmeans,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub events: usize,
    pub annotations: usize,
    pub initial_roi: String,
}

fn parse_occlusion(s: &str) -> Result<(u64, u64)> {
    let bad = || CliError::Usage(format!("occlusion window must be START-END in ms, got {s:?}"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a * 1000, b * 1000))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SynthSummary> {
    let mut scene = match &args.config {
        Some(path) => {
            require_input(path)?;
            SynthConfig::load(path)?
        }
        None => SynthConfig::translation_fixture(),
    };
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    if !args.occlusions.is_empty() {
        scene.occlusions = args.occlusions.iter().map(|s| parse_occlusion(s)).collect::<Result<_>>()?;
        scene.occlusions.sort_unstable();
    }
    scene.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (events, ann) = synthesize_sequence(&scene, args.duration_ms.saturating_mul(1000))?;
    fs::create_dir_all(&args.out_dir)?;
    write_events(&args.out_dir.join(SYNTH_EVENTS), &events)?;
    ann.save(&args.out_dir.join(SYNTH_ANNOTATIONS))?;
    let scene_path = args.out_dir.join(SYNTH_SCENE);
    fs::write(&scene_path, scene.to_text())?;
    let mut manifest = Manifest::new("synth", scene.seed);
    manifest.scene = Some(scene.to_text());
    if let Some(path) = &args.config {
        manifest.input("scene", path)?;
    }
    write_json(&args.out_dir.join(MANIFEST), &manifest)?;
    Ok(SynthSummary {
        events: events.len(),
        annotations: ann.len(),
        initial_roi: scene.object_roi(0).to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: String,
    pub os: f64,
    pub cle: Option<f64>,
}

/// Shifts `roi` right and down by `percent` of its width and height.
pub fn offset_roi(roi: Roi, percent: f64, geom: &SensorGeometry) -> Roi {
    let dx = (roi.w as f64 * percent / 100.0).round() as i64;
    let dy = (roi.h as f64 * percent / 100.0).round() as i64;
    roi.shifted_clamped(dx, dy, geom)
}

/// Configuration and initial box for one sweep value.
pub fn sweep_point(param: SweepParam, value: &str, base: &crate::args::ModelArgs, roi: Roi) -> Result<(EtldConfig, Roi)> {
    let bad = |what: &str| CliError::Usage(format!("{} value {value:?}: {what}", param.name()));
    let mut model = base.clone();
    let mut roi = roi;
    match param {
        SweepParam::CodebookSize => model.codebook_size = value.trim().parse().map_err(|_| bad("expected an integer"))?,
        SweepParam::Tau => model.tau = value.trim().parse().map_err(|_| bad("expected a number"))?,
        SweepParam::TauT => model.tau_t = value.trim().parse().map_err(|_| bad("expected a number"))?,
        SweepParam::InitOffsetPercent => {
            let pct: f64 = value.trim().parse().map_err(|_| bad("expected a number"))?;
            if !(pct.is_finite() && pct >= 0.0) {
                return Err(bad("offset must be a non-negative percentage"));
            }
            let geom = model.config()?.geometry()?;
            roi = offset_roi(roi, pct, &geom);
        }
    }
    Ok((model.config()?, roi))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepPoint>> {
    check_threshold(args.overlap_threshold)?;
    let base = args.model.config()?;
    let geom = base.geometry()?;
    check_roi(&args.roi, &geom)?;
    // Validate every value before the first expensive run.
    let points: Vec<(String, EtldConfig, Roi)> = args
        .values
        .iter()
        .map(|v| sweep_point(args.param, v, &args.model, args.roi).map(|(c, r)| (v.trim().to_string(), c, r)))
        .collect::<Result<_>>()?;
    require_input(&args.events)?;
    require_input(&args.annotations)?;
    let events = read_events(&args.events, &geom)?;
    let ann = AnnotationTrack::load(&args.annotations, &geom)?;
    fs::create_dir_all(&args.out_dir)?;

    let mut results = Vec::with_capacity(points.len());
    for (value, cfg, roi) in &points {
        info!("sweep {}={value}", args.param.name());
        let dir = args.out_dir.join(format!("{}_{value}", args.param.name()));
        fs::create_dir_all(&dir)?;
        let run = track_events(&events, *roi, cfg, Some(&ann), args.overlap_threshold, None)?;
        write_track_outputs(&dir, &run)?;
        let eval = run.report.eval.as_ref().expect("annotations supplied");
        results.push(SweepPoint {
            value: value.clone(),
            os: eval.os,
            cle: eval.cle,
        });
    }

    let mut w = csv::Writer::from_path(args.out_dir.join(SWEEP)).map_err(etld::Error::from)?;
    w.write_record(["value", "os", "cle"]).map_err(etld::Error::from)?;
    for p in &results {
        let cle = p.cle.map(|c| format!("{c:.6}")).unwrap_or_default();
        w.write_record([p.value.clone(), format!("{:.6}", p.os), cle])
            .map_err(etld::Error::from)?;
    }
    w.flush()?;

    let mut manifest = Manifest::new("sweep", base.seed);
    manifest.roi = Some(args.roi.to_string());
    manifest.config = Some(base);
    manifest.overlap_threshold = Some(args.overlap_threshold);
    manifest.sweep = Some(SweepSpec {
        param: args.param.name().into(),
        values: points.iter().map(|p| p.0.clone()).collect(),
    });
    manifest.input("events", &args.events)?;
    manifest.input("annotations", &args.annotations)?;
    write_json(&args.out_dir.join(MANIFEST), &manifest)?;
    Ok(results)
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    /// Summary of per-event durations in nanoseconds; `None` when empty.
    pub fn from_nanos(mut samples: Vec<u64>) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_unstable();
        let n = samples.len();
        let at = |q: f64| samples[((q * n as f64).ceil() as usize).clamp(1, n) - 1] as f64 / 1000.0;
        Some(Self {
            mean_us: samples.iter().sum::<u64>() as f64 / n as f64 / 1000.0,
            median_us: at(0.5),
            p99_us: at(0.99),
            max_us: samples[n - 1] as f64 / 1000.0,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub events: usize,
    pub training_events: usize,
    pub stepped_events: usize,
    pub codebook_size: usize,
    pub training_ms: Option<f64>,
    pub latency: Option<LatencyStats>,
    pub target_median_us: f64,
    pub meets_target: Option<bool>,
}

pub fn bench_events(events: &[Event], roi: Roi, cfg: &EtldConfig) -> Result<BenchReport> {
    let mut report = BenchReport {
        events: events.len(),
        training_events: 0,
        stepped_events: 0,
        codebook_size: cfg.codebook_size,
        training_ms: None,
        latency: None,
        target_median_us: LATENCY_TARGET_US,
        meets_target: None,
    };
    if events.is_empty() {
        return Ok(report);
    }
    let split = training_split(events, cfg.train_us);
    let start = Instant::now();
    let (mut state, _) = EtldState::train(&events[..split], roi, cfg)?;
    report.training_ms = Some(start.elapsed().as_secs_f64() * 1000.0);
    report.training_events = split;
    let mut samples = Vec::with_capacity(events.len() - split);
    for e in &events[split..] {
        let t = Instant::now();
        std::hint::black_box(state.step(e));
        samples.push(t.elapsed().as_nanos() as u64);
    }
    report.stepped_events = samples.len();
    report.latency = LatencyStats::from_nanos(samples);
    report.meets_target = report.latency.as_ref().map(|l| l.median_us <= LATENCY_TARGET_US);
    Ok(report)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport> {
    let cfg = args.model.config()?;
    let geom = cfg.geometry()?;
    check_roi(&args.roi, &geom)?;
    require_input(&args.events)?;
    let events = read_events(&args.events, &geom)?;
    let report = bench_events(&events, args.roi, &cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join(BENCH), &report)?;
    let mut manifest = Manifest::new("bench", cfg.seed);
    manifest.roi = Some(args.roi.to_string());
    manifest.config = Some(cfg);
    manifest.input("events", &args.events)?;
    write_json(&args.out_dir.join(MANIFEST), &manifest)?;
    Ok(report)
}
