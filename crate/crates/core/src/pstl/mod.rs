//! Probabilistic temporal-logic axioms: textual form and windowed evaluation.

pub mod dsl;
pub mod monitor;

pub use dsl::{parse_axiom, parse_axiom_file, print_axiom_file, AxiomFormula, Comparison};
pub use monitor::{
    evaluate_axiom, evaluate_detection, monitor_stream, AxiomVerdict, DetectionVerdict, FrameReport, IdSource,
    Monitor, MonitorConfig, ProbeHistory,
};
