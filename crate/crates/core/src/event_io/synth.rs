//! Desk-scale synthetic scenes: a textured rectangle translating over a
//! drifting, cluttered background. Only edge pixels emit events.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Annotation, AnnotationTrack, Event, Roi, SensorGeometry, ANNOTATION_INTERVAL_US};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sensor_width: u32,
    pub sensor_height: u32,
    pub object_width: u32,
    pub object_height: u32,
    /// Initial top-left corner of the object.
    pub object_x: f64,
    pub object_y: f64,
    /// Object velocity in pixels/s; the object bounces off sensor borders.
    pub object_vx: f64,
    pub object_vy: f64,
    /// Object stays still before this time.
    pub motion_start_us: u64,
    /// Internal texture segments per 1000 px² of object area.
    pub texture_density: f64,
    /// Background clutter segments per 1000 px² of sensor area.
    pub clutter_density: f64,
    /// Background (camera) drift in pixels/s; the background wraps around.
    pub drift_vx: f64,
    pub drift_vy: f64,
    /// Emission rate of every edge pixel, events/s.
    pub event_rate: f64,
    /// Simulation step.
    pub step_us: u64,
    /// Sorted, non-overlapping `[start, end)` windows without object events.
    pub occlusions: Vec<(u64, u64)>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::translation_fixture()
    }
}

impl SynthConfig {
    /// The reference translation scene: a 40x30 textured object over
    /// cluttered background on a 240x180 sensor.
    pub fn translation_fixture() -> Self {
        Self {
            sensor_width: 240,
            sensor_height: 180,
            object_width: 40,
            object_height: 30,
            object_x: 60.0,
            object_y: 60.0,
            object_vx: 12.0,
            object_vy: 6.0,
            motion_start_us: 500_000,
            texture_density: 25.0,
            clutter_density: 2.0,
            drift_vx: -3.0,
            drift_vy: 2.0,
            event_rate: 20.0,
            step_us: 1_000,
            occlusions: Vec::new(),
            seed: 0,
        }
    }

    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.sensor_width, self.sensor_height)
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.geometry()?;
        if self.object_width == 0 || self.object_height == 0 {
            return Err(Error::Config("object must have non-zero area".into()));
        }
        if self.object_width > geom.width || self.object_height > geom.height {
            return Err(Error::Config("object larger than the sensor".into()));
        }
        let rates = [
            ("texture_density", self.texture_density),
            ("clutter_density", self.clutter_density),
            ("event_rate", self.event_rate),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0")));
            }
        }
        for (name, v) in [
            ("object_x", self.object_x),
            ("object_y", self.object_y),
            ("object_vx", self.object_vx),
            ("object_vy", self.object_vy),
            ("drift_vx", self.drift_vx),
            ("drift_vy", self.drift_vy),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.step_us == 0 {
            return Err(Error::Config("step_us must be positive".into()));
        }
        for w in &self.occlusions {
            if w.1 <= w.0 {
                return Err(Error::Config(format!("empty occlusion window {w:?}")));
            }
        }
        for pair in self.occlusions.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Config("occlusion windows must be sorted and disjoint".into()));
            }
        }
        Ok(())
    }

    pub fn is_occluded(&self, t: u64) -> bool {
        self.occlusions.iter().any(|&(s, e)| t >= s && t < e)
    }

    /// Object top-left corner (continuous) at time `t`.
    pub fn object_position(&self, t: u64) -> (f64, f64) {
        let moving_s = t.saturating_sub(self.motion_start_us) as f64 * 1e-6;
        let span_x = (self.sensor_width - self.object_width) as f64;
        let span_y = (self.sensor_height - self.object_height) as f64;
        (
            reflect(self.object_x + self.object_vx * moving_s, span_x),
            reflect(self.object_y + self.object_vy * moving_s, span_y),
        )
    }

    /// Ground-truth box at time `t` (rounded to the pixel grid).
    pub fn object_roi(&self, t: u64) -> Roi {
        let (x, y) = self.object_position(t);
        Roi::new(
            x.round() as u32,
            y.round() as u32,
            self.object_width,
            self.object_height,
        )
    }

    /// Parses the flat `key = value` form. `occlusions` takes
    /// `start-end` pairs separated by `;`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::translation_fixture();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let f = || -> Result<f64> {
                value
                    .parse()
                    .map_err(|_| err(format!("{key}: {value:?} is not a number")))
            };
            let u = || -> Result<u64> {
                value
                    .parse()
                    .map_err(|_| err(format!("{key}: {value:?} is not an unsigned integer")))
            };
            match key {
                "sensor_width" => cfg.sensor_width = u()? as u32,
                "sensor_height" => cfg.sensor_height = u()? as u32,
                "object_width" => cfg.object_width = u()? as u32,
                "object_height" => cfg.object_height = u()? as u32,
                "object_x" => cfg.object_x = f()?,
                "object_y" => cfg.object_y = f()?,
                "object_vx" => cfg.object_vx = f()?,
                "object_vy" => cfg.object_vy = f()?,
                "motion_start_us" => cfg.motion_start_us = u()?,
                "texture_density" => cfg.texture_density = f()?,
                "clutter_density" => cfg.clutter_density = f()?,
                "drift_vx" => cfg.drift_vx = f()?,
                "drift_vy" => cfg.drift_vy = f()?,
                "event_rate" => cfg.event_rate = f()?,
                "step_us" => cfg.step_us = u()?,
                "seed" => cfg.seed = u()?,
                "occlusions" => {
                    cfg.occlusions.clear();
                    for w in value.split(';').map(str::trim).filter(|w| !w.is_empty()) {
                        let (s, e) = w
                            .split_once('-')
                            .ok_or_else(|| err(format!("occlusion {w:?} must be start-end")))?;
                        let parse = |v: &str| {
                            v.trim()
                                .parse::<u64>()
                                .map_err(|_| err(format!("bad occlusion bound {v:?}")))
                        };
                        cfg.occlusions.push((parse(s)?, parse(e)?));
                    }
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sensor_width = {}", self.sensor_width);
        let _ = writeln!(s, "sensor_height = {}", self.sensor_height);
        let _ = writeln!(s, "object_width = {}", self.object_width);
        let _ = writeln!(s, "object_height = {}", self.object_height);
        let _ = writeln!(s, "object_x = {}", self.object_x);
        let _ = writeln!(s, "object_y = {}", self.object_y);
        let _ = writeln!(s, "object_vx = {}", self.object_vx);
        let _ = writeln!(s, "object_vy = {}", self.object_vy);
        let _ = writeln!(s, "motion_start_us = {}", self.motion_start_us);
        let _ = writeln!(s, "texture_density = {}", self.texture_density);
        let _ = writeln!(s, "clutter_density = {}", self.clutter_density);
        let _ = writeln!(s, "drift_vx = {}", self.drift_vx);
        let _ = writeln!(s, "drift_vy = {}", self.drift_vy);
        let _ = writeln!(s, "event_rate = {}", self.event_rate);
        let _ = writeln!(s, "step_us = {}", self.step_us);
        let occ: Vec<String> = self.occlusions.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let _ = writeln!(s, "occlusions = {}", occ.join(";"));
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Triangle-wave reflection of `u` into `[0, span]`.
fn reflect(u: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let m = u.rem_euclid(2.0 * span);
    if m > span {
        2.0 * span - m
    } else {
        m
    }
}

/// A straight run of edge pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSegment {
    pub x: i32,
    pub y: i32,
    /// Unit step, one of the 8 compass directions.
    pub dx: i32,
    pub dy: i32,
    pub len: u32,
}

impl EdgeSegment {
    fn random(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Self {
        const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
        let (dx, dy) = DIRS[rng.gen_range(0..DIRS.len())];
        Self {
            x: rng.gen_range(0..w) as i32,
            y: rng.gen_range(0..h) as i32,
            dx,
            dy,
            len: rng.gen_range(4..=12),
        }
    }

    fn pixels(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.len as i32).map(move |i| (self.x + i * self.dx, self.y + i * self.dy))
    }
}

struct Scene {
    /// Object edge pixels relative to the object's top-left corner.
    object: Vec<(u32, u32)>,
    /// Background edge pixels in wrapped world coordinates.
    background: Vec<(u32, u32)>,
}

fn build_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let (ow, oh) = (cfg.object_width, cfg.object_height);
    let mut object = BTreeSet::new();
    for x in 0..ow {
        object.insert((x, 0));
        object.insert((x, oh - 1));
    }
    for y in 0..oh {
        object.insert((0, y));
        object.insert((ow - 1, y));
    }
    let n_texture = (cfg.texture_density * (ow * oh) as f64 / 1000.0).round() as usize;
    for _ in 0..n_texture {
        let seg = EdgeSegment::random(rng, ow, oh);
        for (x, y) in seg.pixels() {
            if x >= 0 && y >= 0 && (x as u32) < ow && (y as u32) < oh {
                object.insert((x as u32, y as u32));
            }
        }
    }

    let (sw, sh) = (cfg.sensor_width, cfg.sensor_height);
    let mut background = BTreeSet::new();
    let n_clutter = (cfg.clutter_density * (sw * sh) as f64 / 1000.0).round() as usize;
    for _ in 0..n_clutter {
        let seg = EdgeSegment::random(rng, sw, sh);
        for (x, y) in seg.pixels() {
            background.insert((x.rem_euclid(sw as i32) as u32, y.rem_euclid(sh as i32) as u32));
        }
    }
    Scene {
        object: object.into_iter().collect(),
        background: background.into_iter().collect(),
    }
}

/// Number of events an edge pixel emits in one step (Bernoulli thinning of
/// the expected count, with whole events for rates above one per step).
fn draw_count(rng: &mut ChaCha8Rng, expected: f64) -> u32 {
    let whole = expected.floor();
    let frac = expected - whole;
    whole as u32 + u32::from(frac > 0.0 && rng.gen::<f64>() < frac)
}

/// Generates a timestamp-sorted event stream and 10 ms ground-truth
/// annotations. Intervals whose midpoint falls inside an occlusion window
/// are not annotated.
pub fn synthesize_sequence(cfg: &SynthConfig, duration_us: u64) -> Result<(Vec<Event>, AnnotationTrack)> {
    cfg.validate()?;
    if duration_us == 0 {
        return Err(Error::Config("duration must be positive".into()));
    }
    let geom = cfg.geometry()?;
    let mut layout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = build_scene(cfg, &mut layout_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let (sw, sh) = (cfg.sensor_width as f64, cfg.sensor_height as f64);
    let expected = cfg.event_rate * cfg.step_us as f64 * 1e-6;
    let mut events = Vec::new();
    let mut step_events = Vec::new();
    let mut t0 = 0u64;
    while t0 < duration_us {
        let step = cfg.step_us.min(duration_us - t0);
        let expected = expected * step as f64 / cfg.step_us as f64;
        let tm = t0 + step / 2;
        let obj = cfg.object_roi(tm);
        let occluded = cfg.is_occluded(tm);
        let drift_s = tm as f64 * 1e-6;
        let (bx, by) = (
            (cfg.drift_vx * drift_s).round() as i64,
            (cfg.drift_vy * drift_s).round() as i64,
        );
        step_events.clear();
        for &(wx, wy) in &scene.background {
            let x = (wx as i64 + bx).rem_euclid(sw as i64) as u32;
            let y = (wy as i64 + by).rem_euclid(sh as i64) as u32;
            if obj.contains(x, y) {
                continue;
            }
            for _ in 0..draw_count(&mut rng, expected) {
                step_events.push(emit(&mut rng, t0, step, x, y));
            }
        }
        if !occluded {
            for &(ox, oy) in &scene.object {
                let (x, y) = (obj.x + ox, obj.y + oy);
                for _ in 0..draw_count(&mut rng, expected) {
                    step_events.push(emit(&mut rng, t0, step, x, y));
                }
            }
        }
        step_events.sort_by_key(|e| e.t);
        events.extend_from_slice(&step_events);
        t0 += step;
    }

    let mut entries = Vec::new();
    let mut t = 0u64;
    while t + ANNOTATION_INTERVAL_US <= duration_us {
        let a = Annotation {
            t_start: t,
            t_end: t + ANNOTATION_INTERVAL_US,
            roi: cfg.object_roi(t + ANNOTATION_INTERVAL_US / 2),
        };
        if !cfg.is_occluded(a.midpoint()) {
            entries.push(a);
        }
        t += ANNOTATION_INTERVAL_US;
    }
    Ok((events, AnnotationTrack::new(entries, &geom)?))
}

fn emit(rng: &mut ChaCha8Rng, t0: u64, step: u64, x: u32, y: u32) -> Event {
    Event::new(t0 + rng.gen_range(0..step), x as u16, y as u16, rng.gen_range(0..2))
}
