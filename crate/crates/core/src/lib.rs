//! Long-term object tracking on event-camera streams.
//!
//! Events are described on a log-polar lattice, quantized against a k-means
//! codebook, and accumulated into codeword histograms. A local sliding
//! window tracker scores candidate windows with a linear SVM on
//! chi-square-mapped histograms; when it loses the object, a global
//! sliding-window detector over a per-pixel detection matrix proposes a
//! region for re-acquisition.

pub mod classifier;
pub mod codebook;
pub mod descriptor;
pub mod detector;
mod error;
pub mod eval;
pub mod event_io;
pub mod pipeline;
pub mod tracker;

pub use error::{Error, Result};
pub use event_io::{AnnotationTrack, Event, Roi, SensorGeometry};
pub use pipeline::{EtldConfig, EtldState, Mode, TrackOutput};
