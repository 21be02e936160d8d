//! Experiment configuration file (TOML). Every section and key is optional; unknown keys
//! are rejected.
//!
//! ```toml
//! [scene]
//! frame_count = 300
//! object_count = 3
//! seed = 7
//! degradation = { kind = "ramp", start = 1.0, end = 0.4 }
//!
//! [detector]
//! contrast_midpoint = 0.2
//! contrast_slope = 0.015
//!
//! [train]
//! scene_seed = 1001
//! tolerance_sigmas = 3.0
//!
//! [run]
//! mode = "full_frame"
//! monitor = { k_min = 1 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::closed_loop::LoopConfig;
use super::detector::DetectorModel;
use super::scene::SceneConfig;
use super::train::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub detector: DetectorModel,
    pub train: TrainConfig,
    pub run: LoopConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.detector.validate()?;
        self.run.monitor.window.validate()?;
        self.train.monitor.window.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::DegradationSchedule;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "[scene]\nframe_count = 5\ndegradation = { kind = \"ramp\", start = 1.0, end = 0.4 }\n[run.monitor]\nk_min = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.scene.frame_count, 5);
        assert_eq!(cfg.scene.degradation, DegradationSchedule::Ramp { start: 1.0, end: 0.4 });
        assert_eq!(cfg.scene.width, SceneConfig::default().width);
        assert_eq!(cfg.run.monitor.k_min, 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("[scene]\nframe_cont = 5\n", "frame_cont"),
            ("[detector]\nslope = 1\n", "slope"),
            ("[bogus]\n", "bogus"),
            ("[run.monitor]\nwindw = 3\n", "windw"),
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[scene]\nnoise_std = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[detector]\ncontrast_slope = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[run.monitor.window]\nwindow = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
