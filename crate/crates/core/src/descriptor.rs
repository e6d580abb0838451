//! Per-event log-polar context descriptors.
//!
//! Each event is described by the spatial distribution of the most recent
//! events around it, binned on a log-polar lattice. The lattice is
//! precomputed once as a table over relative offsets and applied at every
//! event position, so describing an event is a single pass over the disk.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use crate::event_io::{Event, SensorGeometry};
use crate::{Error, Result};

pub const DEFAULT_RINGS: usize = 5;
pub const DEFAULT_WEDGES: usize = 12;
pub const DEFAULT_R_MIN: f64 = 2.0;
pub const DEFAULT_R_MAX: f64 = 24.0;
pub const DEFAULT_RECENT_CAPACITY: usize = 5000;

/// Precomputed log-polar binning of the offsets in a disk of radius `r_max`.
#[derive(Debug, Clone)]
pub struct LogPolarGrid {
    rings: usize,
    wedges: usize,
    r_min: f64,
    r_max: f64,
    /// Half-width of the square table.
    extent: i32,
    /// Row-major over `[-extent, extent]²`; `None` outside the disk.
    table: Vec<Option<u16>>,
}

impl LogPolarGrid {
    pub fn new(rings: usize, wedges: usize, r_min: f64, r_max: f64) -> Result<Self> {
        if rings == 0 || wedges == 0 {
            return Err(Error::Config("log-polar grid needs at least one ring and one wedge".into()));
        }
        if rings * wedges > u16::MAX as usize {
            return Err(Error::Config("too many log-polar bins".into()));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::Config(format!(
                "log-polar radii must satisfy 0 < r_min < r_max, got r_min={r_min}, r_max={r_max}"
            )));
        }
        let mut grid = Self {
            rings,
            wedges,
            r_min,
            r_max,
            extent: r_max.floor() as i32,
            table: Vec::new(),
        };
        let side = grid.side();
        grid.table = (0..side * side)
            .map(|i| {
                let dy = (i / side) as i32 - grid.extent;
                let dx = (i % side) as i32 - grid.extent;
                grid.direct_bin(dx, dy).map(|b| b as u16)
            })
            .collect();
        Ok(grid)
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn wedges(&self) -> usize {
        self.wedges
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Descriptor dimension, `rings * wedges`.
    pub fn dim(&self) -> usize {
        self.rings * self.wedges
    }

    pub fn extent(&self) -> i32 {
        self.extent
    }

    fn side(&self) -> usize {
        2 * self.extent as usize + 1
    }

    /// Bin of offset `(dx, dy)` from the table.
    pub fn bin(&self, dx: i32, dy: i32) -> Option<usize> {
        if dx.abs() > self.extent || dy.abs() > self.extent {
            return None;
        }
        let idx = (dy + self.extent) as usize * self.side() + (dx + self.extent) as usize;
        self.table[idx].map(usize::from)
    }

    /// Bin of offset `(dx, dy)` from polar coordinates. Ring boundaries are
    /// geometric between `r_min` and `r_max`; distances below `r_min` fold
    /// into ring 0.
    pub fn direct_bin(&self, dx: i32, dy: i32) -> Option<usize> {
        let d = ((dx * dx + dy * dy) as f64).sqrt();
        if d > self.r_max {
            return None;
        }
        let ring = if d < self.r_min {
            0
        } else {
            let r = self.rings as f64 * (d / self.r_min).ln() / (self.r_max / self.r_min).ln();
            (r.floor() as usize).min(self.rings - 1)
        };
        let theta = (dy as f64).atan2(dx as f64).rem_euclid(TAU);
        let wedge = ((theta * self.wedges as f64 / TAU).floor() as usize).min(self.wedges - 1);
        Some(ring * self.wedges + wedge)
    }

    /// In-disk offsets paired with their bins, row-major.
    pub fn offsets(&self) -> impl Iterator<Item = (i32, i32, usize)> + '_ {
        let e = self.extent;
        (-e..=e).flat_map(move |dy| (-e..=e).filter_map(move |dx| self.bin(dx, dy).map(|b| (dx, dy, b))))
    }
}

impl Default for LogPolarGrid {
    fn default() -> Self {
        Self::new(DEFAULT_RINGS, DEFAULT_WEDGES, DEFAULT_R_MIN, DEFAULT_R_MAX)
            .expect("default grid parameters are valid")
    }
}

/// L1-normalized log-polar histogram; all-zero when no neighbors exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// The last `capacity` events, kept as a FIFO plus a per-pixel occupancy
/// map padded by the lattice extent so lookups need no bounds checks.
#[derive(Debug, Clone)]
pub struct RecentBuffer {
    geom: SensorGeometry,
    capacity: usize,
    fifo: VecDeque<(u16, u16)>,
    pad: usize,
    stride: usize,
    occupancy: Vec<u16>,
    surface: Vec<u64>,
    /// `(flat offset from the window's top-left, bin)` for the padded map.
    lattice: Vec<(u32, u16)>,
    dim: usize,
    counts: Vec<u32>,
}

impl RecentBuffer {
    pub fn new(geom: SensorGeometry, grid: &LogPolarGrid, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("recent-event capacity must be positive".into()));
        }
        if capacity > u16::MAX as usize {
            return Err(Error::Config(format!(
                "recent-event capacity {capacity} exceeds {}",
                u16::MAX
            )));
        }
        let pad = grid.extent() as usize;
        let stride = geom.width as usize + 2 * pad;
        let rows = geom.height as usize + 2 * pad;
        let lattice = grid
            .offsets()
            .map(|(dx, dy, b)| {
                let off = (dy + pad as i32) as usize * stride + (dx + pad as i32) as usize;
                (off as u32, b as u16)
            })
            .collect();
        Ok(Self {
            geom,
            capacity,
            fifo: VecDeque::with_capacity(capacity + 1),
            pad,
            stride,
            occupancy: vec![0; stride * rows],
            surface: vec![0; geom.pixel_count()],
            lattice,
            dim: grid.dim(),
            counts: vec![0; grid.dim()],
        })
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Most recent timestamp seen at pixel `(x, y)` (0 if none).
    pub fn last_timestamp(&self, x: u16, y: u16) -> u64 {
        self.surface[y as usize * self.geom.width as usize + x as usize]
    }

    fn padded_index(&self, x: u16, y: u16) -> usize {
        (y as usize + self.pad) * self.stride + x as usize + self.pad
    }

    /// Appends `e`, evicting the oldest event when full.
    pub fn push(&mut self, e: &Event) {
        let idx = self.padded_index(e.x, e.y);
        self.occupancy[idx] += 1;
        self.fifo.push_back((e.x, e.y));
        let s = &mut self.surface[e.y as usize * self.geom.width as usize + e.x as usize];
        *s = (*s).max(e.t);
        if self.fifo.len() > self.capacity {
            let (ox, oy) = self.fifo.pop_front().expect("non-empty");
            let old = self.padded_index(ox, oy);
            self.occupancy[old] -= 1;
        }
    }

    /// Raw neighbor counts per bin for an event at `(x, y)`.
    pub fn neighbor_counts(&mut self, x: u16, y: u16) -> &[u32] {
        self.counts.iter_mut().for_each(|c| *c = 0);
        // Window top-left in padded coordinates is (x, y).
        let base = y as usize * self.stride + x as usize;
        let occ = &self.occupancy[base..];
        for &(off, bin) in &self.lattice {
            self.counts[bin as usize] += occ[off as usize] as u32;
        }
        &self.counts
    }

    /// Writes the descriptor of `e` into `out` (length `dim`) and then
    /// records `e` in the buffer.
    pub fn describe_into(&mut self, e: &Event, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        self.neighbor_counts(e.x, e.y);
        let total: u32 = self.counts.iter().sum();
        if total == 0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let inv = 1.0 / total as f64;
            for (o, &c) in out.iter_mut().zip(&self.counts) {
                *o = c as f64 * inv;
            }
        }
        self.push(e);
    }

    pub fn describe(&mut self, e: &Event) -> Descriptor {
        let mut values = vec![0.0; self.dim];
        self.describe_into(e, &mut values);
        Descriptor { values }
    }
}

/// Convenience: describes `e` against `buf` (which must already hold every
/// preceding event) and then records `e`.
pub fn describe_event(e: &Event, buf: &mut RecentBuffer) -> Descriptor {
    buf.describe(e)
}
