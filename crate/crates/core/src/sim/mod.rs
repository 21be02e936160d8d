//! Synthetic perception world used to exercise the closed loop end to end: a scene
//! generator, a contrast-sensitive mock detector, metrics and the experiment driver.

pub mod closed_loop;
pub mod config;
pub mod detector;
pub mod enhance;
pub mod eval;
pub mod scene;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use closed_loop::{
    run_closed_loop, AdaptationLogEntry, ClosedLoopOutput, ClosedLoopReport, LoopConfig, Method, MethodRun, MethodSummary,
};
pub use config::ExperimentConfig;
pub use detector::{synthetic_detect, DetectorModel};
pub use enhance::equalize_histogram;
pub use eval::{evaluate, EvalConfig, EvalReport};
pub use scene::{generate_scene, DegradationSchedule, Scene, SceneConfig};
pub use train::{
    axioms_from_calibration, collect_labeled_probes, desired_targets, train, training_scene, TrainConfig, Trained,
};

/// Independent generator for one `(seed, stream, a, b)` key.
pub(crate) fn keyed_rng(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, stream, a, b]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
