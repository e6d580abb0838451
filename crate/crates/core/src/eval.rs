//! Overlap success and center location error against annotations.

use std::path::Path;

use serde::Serialize;

use crate::event_io::{AnnotationTrack, Roi};
use crate::tracker::{TrackOutput, TrackState};
use crate::{Error, Result};

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;

/// Intersection over union of two boxes.
pub fn iou(a: &Roi, b: &Roi) -> f64 {
    let ix = a.right().min(b.right()).saturating_sub(a.x.max(b.x)) as u64;
    let iy = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y)) as u64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn center_distance(a: &Roi, b: &Roi) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub t_start: u64,
    pub t_end: u64,
    pub iou: f64,
    pub center_distance: f64,
    pub state: TrackState,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Fraction of evaluated intervals that are overlap successes.
    pub os: f64,
    /// Mean center distance over successes; `None` without any success.
    pub cle: Option<f64>,
    pub threshold: f64,
    pub evaluated: usize,
    pub successes: usize,
    #[serde(skip)]
    pub intervals: Vec<IntervalRecord>,
}

/// Compares the tracker state in force at each annotation midpoint (the
/// latest log row at or before it) with the annotated box. Intervals
/// before the first log row are not evaluated; LOST intervals count as
/// failures.
pub fn evaluate(log: &[TrackOutput], annotations: &AnnotationTrack, threshold: f64) -> Result<EvalReport> {
    if log.is_empty() || annotations.is_empty() {
        return Err(Error::Eval("track log and annotations must both be non-empty".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Eval(format!("overlap threshold {threshold} outside [0, 1]")));
    }
    let mut intervals = Vec::new();
    for a in annotations.entries() {
        let mid = a.midpoint();
        let idx = log.partition_point(|r| r.t <= mid);
        let Some(row) = idx.checked_sub(1).map(|i| &log[i]) else {
            continue;
        };
        let overlap = iou(&row.roi, &a.roi);
        intervals.push(IntervalRecord {
            t_start: a.t_start,
            t_end: a.t_end,
            iou: overlap,
            center_distance: center_distance(&row.roi, &a.roi),
            state: row.state,
            success: row.state == TrackState::Tracking && overlap >= threshold,
        });
    }
    if intervals.is_empty() {
        return Err(Error::Eval("annotations end before the track log starts".into()));
    }
    let successes = intervals.iter().filter(|r| r.success).count();
    let cle = (successes > 0).then(|| {
        intervals.iter().filter(|r| r.success).map(|r| r.center_distance).sum::<f64>() / successes as f64
    });
    Ok(EvalReport {
        os: successes as f64 / intervals.len() as f64,
        cle,
        threshold,
        evaluated: intervals.len(),
        successes,
        intervals,
    })
}

pub fn write_intervals(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_start_us", "t_end_us", "iou", "center_distance", "state", "success"])?;
    for r in &report.intervals {
        w.write_record([
            r.t_start.to_string(),
            r.t_end.to_string(),
            format!("{:.6}", r.iou),
            format!("{:.6}", r.center_distance),
            r.state.to_string(),
            u8::from(r.success).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::{Annotation, SensorGeometry};
    use proptest::prelude::*;

    fn row(t: u64, roi: Roi, state: TrackState) -> TrackOutput {
        TrackOutput { t, roi, score: 1.0, state }
    }

    fn track(entries: &[(u64, Roi)]) -> AnnotationTrack {
        AnnotationTrack::new(
            entries
                .iter()
                .map(|&(t, roi)| Annotation { t_start: t, t_end: t + 10_000, roi })
                .collect(),
            &SensorGeometry::default(),
        )
        .unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = Roi::new(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &Roi::new(10, 0, 10, 10)), 0.0);
        assert!((iou(&a, &Roi::new(5, 0, 10, 10)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_tracker() {
        let boxes: Vec<(u64, Roi)> = (0..20).map(|i| (i * 10_000, Roi::new(10 + i as u32, 20, 30, 20))).collect();
        let log: Vec<_> = boxes.iter().map(|&(t, r)| row(t, r, TrackState::Tracking)).collect();
        let rep = evaluate(&log, &track(&boxes), 0.5).unwrap();
        assert_eq!(rep.os, 1.0);
        assert_eq!(rep.cle, Some(0.0));
        assert_eq!(rep.evaluated, 20);
    }

    #[test]
    fn three_interval_fixture() {
        // 40x10 boxes shifted by s give IoU (40-s)/(40+s):
        // s=10 -> 0.6, s=17 -> 0.4035, s=12 -> 0.5385.
        let gt = Roi::new(0, 0, 40, 10);
        let preds = [10u32, 17, 12];
        let log: Vec<_> = preds
            .iter()
            .enumerate()
            .map(|(i, &s)| row(i as u64 * 10_000, Roi::new(s, 0, 40, 10), TrackState::Tracking))
            .collect();
        let ann = track(&[(0, gt), (10_000, gt), (20_000, gt)]);
        let rep = evaluate(&log, &ann, 0.5).unwrap();
        let ious: Vec<f64> = rep.intervals.iter().map(|r| r.iou).collect();
        assert!((ious[0] - 0.6).abs() < 1e-12);
        assert!((ious[1] - 23.0 / 57.0).abs() < 1e-12);
        assert!((ious[2] - 28.0 / 52.0).abs() < 1e-12);
        assert!((rep.os - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.cle, Some(11.0));
    }

    #[test]
    fn lost_intervals_fail_and_out_of_range_errors() {
        let gt = Roi::new(0, 0, 10, 10);
        let log = vec![row(0, gt, TrackState::Tracking), row(12_000, gt, TrackState::Lost)];
        let rep = evaluate(&log, &track(&[(0, gt), (10_000, gt), (20_000, gt)]), 0.5).unwrap();
        // Midpoints 5000, 15000, 25000: only the first sees TRACKING.
        assert_eq!(rep.successes, 1);
        assert_eq!(rep.evaluated, 3);
        assert_eq!(rep.intervals[1].state, TrackState::Lost);
        assert!(!rep.intervals[1].success && !rep.intervals[2].success);
        assert_eq!(rep.intervals[1].iou, 1.0);

        let late = vec![row(1_000_000, gt, TrackState::Tracking)];
        assert!(matches!(evaluate(&late, &track(&[(0, gt)]), 0.5), Err(Error::Eval(_))));
        assert!(evaluate(&[], &track(&[(0, gt)]), 0.5).is_err());
    }

    fn arb_roi() -> impl Strategy<Value = Roi> {
        (0u32..200, 0u32..150, 1u32..40, 1u32..30).prop_map(|(x, y, w, h)| Roi::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_roi(), b in arb_roi()) {
            let v = iou(&a, &b);
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn raising_threshold_never_raises_os(
            preds in proptest::collection::vec(arb_roi(), 1..30),
            gt in arb_roi(),
            lo in 0.0f64..1.0, hi in 0.0f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let log: Vec<_> = preds.iter().enumerate().map(|(i, &r)| row(i as u64 * 10_000, r, TrackState::Tracking)).collect();
            let ann: Vec<(u64, Roi)> = (0..preds.len()).map(|i| (i as u64 * 10_000, gt)).collect();
            let ann = track(&ann);
            prop_assert!(evaluate(&log, &ann, hi).unwrap().os <= evaluate(&log, &ann, lo).unwrap().os);
        }

        #[test]
        fn rows_between_midpoints_do_not_matter(
            preds in proptest::collection::vec(arb_roi(), 2..20),
            noise in proptest::collection::vec(arb_roi(), 2..20),
            gt in arb_roi(),
        ) {
            // Rows at each midpoint decide; extra rows strictly between a
            // midpoint and the next interval start are never in force.
            let mut log = Vec::new();
            let mut noisy = Vec::new();
            for (i, r) in preds.iter().enumerate() {
                let t = i as u64 * 10_000;
                log.push(row(t, *r, TrackState::Tracking));
                noisy.push(row(t, noise[i % noise.len()], TrackState::Lost));
                noisy.push(row(t + 5_000, *r, TrackState::Tracking));
                noisy.push(row(t + 5_000, *r, TrackState::Tracking));
            }
            let _ = &log;
            let ann: Vec<(u64, Roi)> = (0..preds.len()).map(|i| (i as u64 * 10_000, gt)).collect();
            let ann = track(&ann);
            let clean: Vec<_> = preds.iter().enumerate().map(|(i, &r)| row(i as u64 * 10_000 + 5_000, r, TrackState::Tracking)).collect();
            prop_assert_eq!(evaluate(&clean, &ann, 0.5).unwrap().os, evaluate(&noisy, &ann, 0.5).unwrap().os);
        }
    }
}
