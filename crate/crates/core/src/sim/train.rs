//! Calibration run on a synthetic scene: detect, label against ground truth, compute
//! probes and fit the axiom set.

use serde::{Deserialize, Serialize};

use super::detector::{synthetic_detect, DetectorModel};
use super::eval::match_frame;
use super::scene::{generate_scene, DegradationSchedule, Scene, SceneConfig};
use crate::adaptation::DesiredTargets;
use crate::calibration::{build_axiom_set, Calibration, CalibrationConfig, LabeledSample};
use crate::error::{Error, Result};
use crate::probes::{Label, ProbeId, ProbeRecord};
use crate::pstl::{AxiomFormula, Monitor, MonitorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub calibration: CalibrationConfig,
    pub monitor: MonitorConfig,
    /// IoU at which a detection counts as a true positive.
    pub iou_threshold: f64,
    /// Width of the no-correction band around the desired contrast, in standard deviations
    /// of the true-positive contrast.
    pub tolerance_sigmas: f64,
    /// Seed of the training scene; keep it apart from the evaluation seed.
    pub scene_seed: u64,
    pub frame_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            calibration: CalibrationConfig::default(),
            monitor: MonitorConfig::default(),
            iou_threshold: 0.5,
            tolerance_sigmas: 3.0,
            scene_seed: 1001,
            frame_count: 300,
        }
    }
}

/// Runs the detector over `scene` and records the probes of every detection, labeled by
/// IoU matching against ground truth.
pub fn collect_labeled_probes(
    scene: &Scene,
    detector: &DetectorModel,
    monitor: &MonitorConfig,
    iou_threshold: f64,
) -> Result<Vec<ProbeRecord<f64>>> {
    let mut probe_monitor = Monitor::new(Vec::new(), monitor.clone())?;
    let mut records = Vec::new();
    for (t, (frame, gt)) in scene.frames.iter().zip(&scene.gt).enumerate() {
        let dets = synthetic_detect(t, frame, gt, detector)?;
        let report = probe_monitor.observe(t, dets, frame)?;
        let matched = match_frame(gt, &report.detections, iou_threshold);
        for ((det, pv), tp) in report.detections.iter().zip(&report.probes).zip(matched) {
            let label = if tp { Label::TruePositive } else { Label::FalsePositive };
            records.push(ProbeRecord::new(det, *pv, Some(label)));
        }
    }
    Ok(records)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Desired contrast and entropy: means over true positives. The tolerance band is
/// `tolerance_sigmas` standard deviations of the true-positive contrast.
pub fn desired_targets(records: &[ProbeRecord<f64>], tolerance_sigmas: f64) -> Result<DesiredTargets<f64>> {
    let tp: Vec<&ProbeRecord<f64>> = records
        .iter()
        .filter(|r| r.label == Some(Label::TruePositive))
        .collect();
    if tp.is_empty() {
        return Err(Error::Calibration {
            probe: ProbeId::Contrast,
            reason: "no true-positive samples for the desired contrast".into(),
        });
    }
    let contrast: Vec<f64> = tp.iter().map(|r| r.probes.contrast).collect();
    let entropy: Vec<f64> = tp.iter().map(|r| r.probes.entropy_bits).collect();
    let (c_mean, c_std) = mean_std(&contrast);
    let (e_mean, _) = mean_std(&entropy);
    Ok(DesiredTargets::new(c_mean, e_mean)?.with_tolerance(tolerance_sigmas * c_std))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub calibration: Calibration<f64>,
    pub axioms: Vec<AxiomFormula<f64>>,
    pub targets: DesiredTargets<f64>,
    pub records: Vec<ProbeRecord<f64>>,
}

pub fn axioms_from_calibration(calibration: &Calibration<f64>) -> Result<Vec<AxiomFormula<f64>>> {
    calibration
        .axioms
        .iter()
        .map(|spec| AxiomFormula::from_spec(spec.probe.name(), spec.clone()))
        .collect()
}

/// The evaluation scene re-seeded with `cfg.scene_seed`, resized to `cfg.frame_count`
/// frames and held at full contrast.
pub fn training_scene(base: &SceneConfig, cfg: &TrainConfig) -> SceneConfig {
    SceneConfig {
        seed: cfg.scene_seed,
        frame_count: cfg.frame_count,
        degradation: DegradationSchedule::Constant { gain: 1.0 },
        ..base.clone()
    }
}

/// Generates the training scene, labels detections and builds axioms and targets.
pub fn train(scene: &SceneConfig, detector: &DetectorModel, cfg: &TrainConfig) -> Result<Trained> {
    detector.validate()?;
    let scene = generate_scene(scene)?;
    let records = collect_labeled_probes(&scene, detector, &cfg.monitor, cfg.iou_threshold)?;
    let samples: Vec<LabeledSample<f64>> = records.iter().filter_map(LabeledSample::from_record).collect();
    let calibration = build_axiom_set(&samples, &cfg.calibration)?;
    let axioms = axioms_from_calibration(&calibration)?;
    let targets = desired_targets(&records, cfg.tolerance_sigmas)?;
    Ok(Trained {
        calibration,
        axioms,
        targets,
        records,
    })
}
