//! Local sliding-window tracker.
//!
//! Around the current box, `(2p+1)^2` box-sized candidate windows each keep
//! a codeword histogram. Every event in the sliding area bumps the
//! histograms of the candidates that contain it, found through a
//! precomputed pixel-to-candidates table. Once `ceil(tau * w * h)` events
//! have landed in the sliding area, every candidate is scored and the best
//! one becomes the new box.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::SvmModel;
use crate::codebook::CountHistogram;
use crate::event_io::{Event, Roi, SensorGeometry};
use crate::{Error, Result};

pub const DEFAULT_PADDING: u32 = 2;
pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_TAU_T: f64 = 0.8;

/// `(2p+1)^2` box-sized windows at offsets in `[-p, p]^2`, clamped to the
/// sensor. Index 0 is the unshifted box; the rest follow in order of
/// increasing offset distance, then row, then column.
pub fn enumerate_candidates(roi: &Roi, padding: u32, geom: &SensorGeometry) -> Vec<Roi> {
    let p = padding as i64;
    let mut offsets: Vec<(i64, i64)> = (-p..=p).flat_map(|dy| (-p..=p).map(move |dx| (dx, dy))).collect();
    offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    offsets
        .into_iter()
        .map(|(dx, dy)| roi.shifted_clamped(dx, dy, geom))
        .collect()
}

/// Number of sliding-area events between classifications.
pub fn trigger_threshold(tau: f64, roi: &Roi) -> u64 {
    ((tau * roi.area() as f64).ceil() as u64).max(1)
}

/// Running mean of the scores of successful tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    mean: f64,
    n: u64,
}

impl ScoreStats {
    pub fn seeded(score: f64) -> Self {
        Self { mean: score, n: 1 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn record(&mut self, score: f64) {
        self.n += 1;
        self.mean += (score - self.mean) / self.n as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgement {
    Success,
    Failure,
}

/// Success iff `score >= tau_t * mean`; a success is folded into the mean.
pub fn judge(score: f64, stats: &mut ScoreStats, tau_t: f64) -> Judgement {
    if score >= tau_t * stats.mean() {
        stats.record(score);
        Judgement::Success
    } else {
        Judgement::Failure
    }
}

/// Result of scoring every candidate window at a trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub window: Roi,
    pub score: f64,
    pub index: usize,
    /// The winner's histogram as it was before the reset.
    pub histogram: CountHistogram,
}

/// Candidate rectangles relative to the sliding-area origin.
type Layout = Vec<(u32, u32)>;

#[derive(Debug, Clone)]
pub struct TrackerState {
    geom: SensorGeometry,
    k: usize,
    padding: u32,
    tau: f64,
    roi: Roi,
    candidates: Vec<Roi>,
    /// Bounding box of the union of candidates.
    area: Roi,
    layout: Layout,
    /// CSR table: pixel `i` of `area` (row-major) is inside candidates
    /// `members[starts[i]..starts[i + 1]]`.
    starts: Vec<u32>,
    members: Vec<u16>,
    /// Candidate-major `counts[c * k + word]`.
    counts: Vec<u32>,
    totals: Vec<u64>,
    event_count: u64,
    threshold: u64,
}

impl TrackerState {
    pub fn new(roi: Roi, padding: u32, tau: f64, k: usize, geom: SensorGeometry) -> Result<Self> {
        roi.validate(&geom)?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
        }
        let n = (2 * padding as usize + 1).pow(2);
        if n > u16::MAX as usize {
            return Err(Error::Config(format!("padding {padding} gives too many candidates")));
        }
        let mut st = Self {
            geom,
            k,
            padding,
            tau,
            roi,
            candidates: Vec::new(),
            area: roi,
            layout: Vec::new(),
            starts: Vec::new(),
            members: Vec::new(),
            counts: vec![0; n * k],
            totals: vec![0; n],
            event_count: 0,
            threshold: 0,
        };
        st.recenter(roi);
        Ok(st)
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    pub fn padding(&self) -> u32 {
        self.padding
    }

    pub fn candidates(&self) -> &[Roi] {
        &self.candidates
    }

    pub fn sliding_area(&self) -> Roi {
        self.area
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    pub fn trigger_threshold(&self) -> u64 {
        self.threshold
    }

    pub fn histogram(&self, c: usize) -> CountHistogram {
        CountHistogram::from_counts(self.counts[c * self.k..(c + 1) * self.k].to_vec())
    }

    pub fn candidate_events(&self, c: usize) -> u64 {
        self.totals[c]
    }

    /// Candidates containing pixel `(x, y)` according to the lookup table.
    pub fn members_at(&self, x: u32, y: u32) -> &[u16] {
        if !self.area.contains(x, y) {
            return &[];
        }
        let i = ((y - self.area.y) * self.area.w + (x - self.area.x)) as usize;
        &self.members[self.starts[i] as usize..self.starts[i + 1] as usize]
    }

    /// Moves the box to `roi`, rebuilding candidates and (if the relative
    /// geometry changed) the membership table. Clears all accumulation.
    pub fn recenter(&mut self, roi: Roi) {
        self.roi = roi;
        self.threshold = trigger_threshold(self.tau, &roi);
        self.candidates = enumerate_candidates(&roi, self.padding, &self.geom);
        let x0 = self.candidates.iter().map(|c| c.x).min().expect("at least one candidate");
        let y0 = self.candidates.iter().map(|c| c.y).min().expect("at least one candidate");
        let x1 = self.candidates.iter().map(Roi::right).max().expect("at least one candidate");
        let y1 = self.candidates.iter().map(Roi::bottom).max().expect("at least one candidate");
        let area = Roi::new(x0, y0, x1 - x0, y1 - y0);
        let layout: Layout = self.candidates.iter().map(|c| (c.x - x0, c.y - y0)).collect();
        if layout != self.layout || area.w != self.area.w || area.h != self.area.h || self.starts.is_empty() {
            self.build_table(&area, &layout);
            self.layout = layout;
        }
        self.area = area;
        self.reset();
    }

    fn build_table(&mut self, area: &Roi, layout: &Layout) {
        let (w, h) = (self.roi.w, self.roi.h);
        self.starts.clear();
        self.members.clear();
        self.starts.push(0);
        for y in 0..area.h {
            for x in 0..area.w {
                for (c, &(cx, cy)) in layout.iter().enumerate() {
                    if x >= cx && x < cx + w && y >= cy && y < cy + h {
                        self.members.push(c as u16);
                    }
                }
                self.starts.push(self.members.len() as u32);
            }
        }
    }

    /// Zeroes every candidate histogram and the trigger counter.
    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.totals.iter_mut().for_each(|c| *c = 0);
        self.event_count = 0;
    }

    /// Adds an event quantized to word `k`. Returns `true` when the trigger
    /// threshold is reached.
    pub fn ingest_event(&mut self, e: &Event, k: usize) -> bool {
        let (x, y) = (e.x as u32, e.y as u32);
        if !self.area.contains(x, y) {
            return false;
        }
        let i = ((y - self.area.y) * self.area.w + (x - self.area.x)) as usize;
        let (s, t) = (self.starts[i] as usize, self.starts[i + 1] as usize);
        if s == t {
            return false;
        }
        for &c in &self.members[s..t] {
            self.counts[c as usize * self.k + k] += 1;
            self.totals[c as usize] += 1;
        }
        self.event_count += 1;
        self.event_count >= self.threshold
    }

    /// Scores of all candidates, in candidate order.
    pub fn candidate_scores(&self, model: &SvmModel) -> Vec<f64> {
        (0..self.candidates.len())
            .map(|c| model.score_counts(&self.counts[c * self.k..(c + 1) * self.k], self.totals[c]))
            .collect()
    }

    /// Picks the highest-scoring candidate (first index on ties), then
    /// recenters on it and clears all accumulation.
    pub fn classify_candidates(&mut self, model: &SvmModel) -> Classification {
        let scores = self.candidate_scores(model);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        let result = Classification {
            window: self.candidates[best],
            score: scores[best],
            index: best,
            histogram: self.histogram(best),
        };
        self.recenter(result.window);
        result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrackState {
    Tracking,
    Lost,
}

impl fmt::Display for TrackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackState::Tracking => "TRACKING",
            TrackState::Lost => "LOST",
        })
    }
}

impl FromStr for TrackState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TRACKING" => Ok(TrackState::Tracking),
            "LOST" => Ok(TrackState::Lost),
            other => Err(Error::Validation(format!("unknown track state {other:?}"))),
        }
    }
}

/// One row of the track log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub t: u64,
    pub roi: Roi,
    pub score: f64,
    pub state: TrackState,
}

#[derive(Serialize, Deserialize)]
struct TrackRow {
    t_us: u64,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    score: f64,
    state: TrackState,
}

pub fn write_track_log(path: &Path, rows: &[TrackOutput]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["t_us", "x", "y", "w", "h", "score", "state"])?;
    }
    for r in rows {
        w.serialize(TrackRow {
            t_us: r.t,
            x: r.roi.x,
            y: r.roi.y,
            w: r.roi.w,
            h: r.roi.h,
            score: r.score,
            state: r.state,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_track_log(path: &Path) -> Result<Vec<TrackOutput>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        let r: TrackRow = row?;
        rows.push(TrackOutput {
            t: r.t_us,
            roi: Roi::new(r.x, r.y, r.w, r.h),
            score: r.score,
            state: r.state,
        });
    }
    if rows.windows(2).any(|p| p[1].t < p[0].t) {
        return Err(Error::Validation("track log timestamps must be non-decreasing".into()));
    }
    Ok(rows)
}
