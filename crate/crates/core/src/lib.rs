//! Pseudo-thermal ghost-imaging simulation toolkit.
//!
//! The crate models a two-arm ghost imager: a reference arm that records a
//! sequence of speckle intensity frames, and a test arm that records only a
//! single bucket value per frame (the object-weighted sum of the same
//! speckle field). An image of the object is recovered by correlating the
//! bucket sequence against the per-pixel reference fluctuations.
//!
//! The point of the toolkit is to compare what happens to the recovered
//! image when the reference frames are binarized before correlation:
//!
//! * `none` — the raw intensities are used as-is,
//! * `mean` — each frame is thresholded at its own mean,
//! * `otsu` — each frame is thresholded at its own global Otsu level,
//! * `point_by_point` — each frame gets a per-pixel threshold map grown from
//!   block-wise Otsu corners and blended with the global level.
//!
//! Module map:
//!
//! * [`speckle`] — the speckle field model, frame/bucket generation, and the
//!   [`speckle::MeasurementRun`] abstraction over synthetic and stored runs.
//! * [`objects`] — transmission masks: double slits, a procedural test card,
//!   and grayscale image import/export.
//! * [`binarization`] — quantization, Otsu, and the four strategies,
//!   including the block threshold propagation machinery.
//! * [`reconstruction`] — the streaming fluctuation-correlation accumulator
//!   and display normalization.
//! * [`metrics`] — correlation score, fill fraction, and speckle grain width.
//! * [`stack`] — the binary frame-stack file format.
//! * [`experiment`] — orchestration: comparison runs, reconstruction from
//!   stored stacks, speckle statistics, CSV/PGM outputs.
//! * [`pgm`] — the PGM (P5) codec used for all image files.
//!
//! Everything is deterministic given the configuration: a run is a pure
//! function of its seed and parameters, and output files are byte-stable
//! unless wall-clock timing columns are explicitly requested.

pub mod binarization;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod objects;
pub mod pgm;
pub mod reconstruction;
pub mod speckle;
pub mod stack;

pub use binarization::{BinarizationMethod, BinaryFrame, BlockSpec};
pub use error::{Error, Result};
pub use experiment::{reconstruct_run, run_compare, speckle_stats, ExperimentConfig, ObjectSpec};
pub use metrics::MetricsReport;
pub use objects::ObjectMask;
pub use reconstruction::{Accumulator, Reconstruction};
pub use speckle::{MeasurementRun, ReferenceFrame, SpeckleParams};
pub use stack::{read_stack, write_stack};
