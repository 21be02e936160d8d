//! Perception error monitoring and contrast adaptation.
//!
//! Object detections are turned into scalar probes (size, aspect ratio, confidence,
//! contrast, entropy, tracking deviations), checked against probabilistic axioms over a
//! sliding window of frames, and detections that violate them trigger a contrast
//! correction of the frame before detection is run again.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases at the crate
//! root fix the scalar to `f64`, which is what the simulator and the command-line tool use.

pub mod adaptation;
pub mod calibration;
pub mod error;
pub mod io;
pub mod model;
pub mod probes;
pub mod pstl;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use adaptation::{adapt_frame, apply_contrast, histogram_bound, optimal_contrast_delta, AdaptMode};
pub use calibration::{build_axiom_set, fit_distribution, intersect_bounds, ModelKind};
pub use model::{associate_tracks, crop, iou, GrayImage};
pub use probes::{michelson_contrast, shannon_entropy, Label, ProbeId, WindowConfig};
pub use pstl::{evaluate_axiom, monitor_stream, parse_axiom, parse_axiom_file, Comparison, MonitorConfig};

/// Default scalar.
pub type Real = f64;

pub type BoundingBox = model::BoundingBox<Real>;
pub type Detection = model::Detection<Real>;
pub type Track = model::Track<Real>;
pub type Tracker = model::Tracker<Real>;
pub type ProbeVector = probes::ProbeVector<Real>;
pub type ProbeRecord = probes::ProbeRecord<Real>;
pub type ProbeDistribution = calibration::ProbeDistribution<Real>;
pub type AxiomSpec = calibration::AxiomSpec<Real>;
pub type LabeledSample = calibration::LabeledSample<Real>;
pub type Calibration = calibration::Calibration<Real>;
pub type AxiomFormula = pstl::AxiomFormula<Real>;
pub type AxiomVerdict = pstl::AxiomVerdict<Real>;
pub type DetectionVerdict = pstl::DetectionVerdict<Real>;
pub type Monitor = pstl::Monitor<Real>;
pub type FrameReport = pstl::FrameReport<Real>;
pub type AdaptationCommand = adaptation::AdaptationCommand<Real>;
pub type DesiredTargets = adaptation::DesiredTargets<Real>;
