//! Event, ROI and annotation types plus every on-disk format the pipeline
//! reads: event text files, annotation CSVs and synthetic-scene configs.

mod synth;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use synth::{synthesize_sequence, EdgeSegment, SynthConfig};

/// Default DAVIS240 sensor width in pixels.
pub const DAVIS_WIDTH: u32 = 240;
/// Default DAVIS240 sensor height in pixels.
pub const DAVIS_HEIGHT: u32 = 180;

/// Length of one canonical annotation interval.
pub const ANNOTATION_INTERVAL_US: u64 = 10_000;

/// One address-event: pixel `(x, y)`, timestamp in microseconds, polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: u8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: u8) -> Self {
        Self { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self {
            width: DAVIS_WIDTH,
            height: DAVIS_HEIGHT,
        }
    }
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        if width > u16::MAX as u32 || height > u16::MAX as u32 {
            return Err(Error::Config(format!(
                "sensor geometry {width}x{height} exceeds 16-bit addresses"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    pub fn check_event(&self, e: &Event) -> Result<()> {
        if self.contains(e.x as u32, e.y as u32) {
            Ok(())
        } else {
            Err(Error::Bounds(format!(
                "event ({}, {}) outside {}x{} sensor",
                e.x, e.y, self.width, self.height
            )))
        }
    }
}

/// Axis-aligned bounding box: `w` columns starting at `x`, `h` rows starting at `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Roi {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Parses the `x,y,w,h` form used on the command line.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("roi must be x,y,w,h, got {s:?}")));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Config(format!("roi component {p:?} is not an integer")))?;
        }
        Ok(Self::new(v[0], v[1], v[2], v[3]))
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn fits(&self, geom: &SensorGeometry) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= geom.width && self.bottom() <= geom.height
    }

    pub fn validate(&self, geom: &SensorGeometry) -> Result<()> {
        if self.fits(geom) {
            Ok(())
        } else {
            Err(Error::Bounds(format!(
                "roi {self} not inside {}x{} sensor",
                geom.width, geom.height
            )))
        }
    }

    /// Translates by `(dx, dy)` and clamps the top-left corner so the
    /// window stays inside the sensor. Size is preserved.
    pub fn shifted_clamped(&self, dx: i64, dy: i64, geom: &SensorGeometry) -> Self {
        let max_x = geom.width.saturating_sub(self.w) as i64;
        let max_y = geom.height.saturating_sub(self.h) as i64;
        Self {
            x: (self.x as i64 + dx).clamp(0, max_x) as u32,
            y: (self.y as i64 + dy).clamp(0, max_y) as u32,
            w: self.w,
            h: self.h,
        }
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// Parses one `t_seconds x y p` line.
///
/// `line_no` is only used for error messages (1-based).
pub fn parse_event_line(line: &str, line_no: usize, geom: &SensorGeometry) -> Result<Event> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    let secs: f64 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad timestamp {:?}", fields[0])))?;
    if !secs.is_finite() || secs < 0.0 {
        return Err(err(format!("timestamp {:?} must be non-negative", fields[0])));
    }
    let t = (secs * 1e6).round() as u64;
    let x: u32 = fields[1]
        .parse()
        .map_err(|_| err(format!("bad x coordinate {:?}", fields[1])))?;
    let y: u32 = fields[2]
        .parse()
        .map_err(|_| err(format!("bad y coordinate {:?}", fields[2])))?;
    let p: u8 = match fields[3] {
        "0" => 0,
        "1" => 1,
        other => return Err(err(format!("polarity must be 0 or 1, got {other:?}"))),
    };
    if !geom.contains(x, y) {
        return Err(Error::Bounds(format!(
            "line {line_no}: ({x}, {y}) outside {}x{} sensor",
            geom.width, geom.height
        )));
    }
    Ok(Event::new(t, x as u16, y as u16, p))
}

/// Formats an event in the canonical text form (inverse of [`parse_event_line`]).
pub fn format_event(e: &Event) -> String {
    format!("{}.{:06} {} {} {}", e.t / 1_000_000, e.t % 1_000_000, e.x, e.y, e.p)
}

/// Reads an event file. Blank lines are skipped; timestamps must be non-decreasing.
pub fn read_events(path: &Path, geom: &SensorGeometry) -> Result<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    let mut last_t = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = parse_event_line(&line, i + 1, geom)?;
        if e.t < last_t {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("timestamp {} precedes previous {}", e.t, last_t),
            });
        }
        last_t = e.t;
        events.push(e);
    }
    Ok(events)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        writeln!(w, "{}", format_event(e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub t_start: u64,
    pub t_end: u64,
    pub roi: Roi,
}

impl Annotation {
    pub fn midpoint(&self) -> u64 {
        self.t_start + (self.t_end - self.t_start) / 2
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationRow {
    t_start_us: u64,
    t_end_us: u64,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

/// Ground-truth boxes over sorted, non-overlapping half-open intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationTrack {
    entries: Vec<Annotation>,
}

impl AnnotationTrack {
    pub fn new(mut entries: Vec<Annotation>, geom: &SensorGeometry) -> Result<Self> {
        entries.sort_by_key(|a| (a.t_start, a.t_end));
        for a in &entries {
            if a.t_end <= a.t_start {
                return Err(Error::Validation(format!(
                    "empty interval [{}, {})",
                    a.t_start, a.t_end
                )));
            }
            a.roi.validate(geom)?;
        }
        for pair in entries.windows(2) {
            if pair[1].t_start < pair[0].t_end {
                return Err(Error::Validation(format!(
                    "intervals [{}, {}) and [{}, {}) overlap",
                    pair[0].t_start, pair[0].t_end, pair[1].t_start, pair[1].t_end
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Annotation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The annotation whose interval contains `t`, if any.
    pub fn at(&self, t: u64) -> Option<&Annotation> {
        let idx = self.entries.partition_point(|a| a.t_start <= t);
        let a = self.entries.get(idx.checked_sub(1)?)?;
        (t < a.t_end).then_some(a)
    }

    pub fn load(path: &Path, geom: &SensorGeometry) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let row: AnnotationRow = row?;
            entries.push(Annotation {
                t_start: row.t_start_us,
                t_end: row.t_end_us,
                roi: Roi::new(row.x, row.y, row.w, row.h),
            });
        }
        Self::new(entries, geom)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.entries.is_empty() {
            w.write_record(["t_start_us", "t_end_us", "x", "y", "w", "h"])?;
        }
        for a in &self.entries {
            w.serialize(AnnotationRow {
                t_start_us: a.t_start,
                t_end_us: a.t_end,
                x: a.roi.x,
                y: a.roi.y,
                w: a.roi.w,
                h: a.roi.h,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads an annotation CSV with the default DAVIS geometry.
pub fn load_annotations(path: &Path) -> Result<AnnotationTrack> {
    AnnotationTrack::load(path, &SensorGeometry::default())
}
