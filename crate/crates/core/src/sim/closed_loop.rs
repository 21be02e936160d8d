//! Experiment driver: the same scene and detector seeds run through each method.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::detector::{synthetic_detect, DetectorModel};
use super::enhance::equalize_histogram;
use super::eval::{evaluate, EvalConfig, EvalReport};
use super::scene::{generate_scene, SceneConfig};
use crate::adaptation::{adapt_frame, AdaptMode, DesiredTargets};
use crate::error::{Error, Result};
use crate::pstl::{AxiomFormula, Monitor, MonitorConfig};

type Detection = crate::model::Detection<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Detector on the raw frames.
    Baseline,
    /// Detector on globally equalized frames.
    HistEq,
    /// Monitor, adapt contrast when axioms fail, re-detect.
    Cogsense,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::HistEq, Method::Cogsense];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::HistEq => "hist_eq",
            Method::Cogsense => "cogsense",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected baseline, hist_eq or cogsense)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub monitor: MonitorConfig,
    pub mode: AdaptMode,
    pub eval: EvalConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            monitor: MonitorConfig::default(),
            mode: AdaptMode::FullFrame,
            eval: EvalConfig::default(),
        }
    }
}

/// One applied contrast correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationLogEntry {
    pub frame: usize,
    pub delta_c: f64,
    pub bound_b: f64,
    pub i_max: f64,
    pub i_min: f64,
    pub mode: AdaptMode,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub report: EvalReport,
    /// Final detections per frame, with track IDs.
    pub detections: Vec<Vec<Detection>>,
    pub adaptations: Vec<AdaptationLogEntry>,
    /// Frames with at least one erroneous detection in the final verdicts.
    pub flagged_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    #[serde(flatten)]
    pub report: EvalReport,
    pub adaptations: usize,
    pub flagged_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub frames: usize,
    pub iou_threshold: f64,
    pub operating_threshold: f64,
    pub per_method: BTreeMap<Method, MethodSummary>,
}

impl ClosedLoopReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned-column summary for humans.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = |out: &mut String, cells: [&str; 10]| {
            writeln!(
                out,
                "{:<10} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9} {:>10} {:>10} {:>7}",
                cells[0], cells[1], cells[2], cells[3], cells[4], cells[5], cells[6], cells[7], cells[8], cells[9]
            )
            .expect("writing to a string")
        };
        writeln!(
            out,
            "{} frames, IoU >= {}, confidence >= {}",
            self.frames, self.iou_threshold, self.operating_threshold
        )
        .expect("writing to a string");
        w(
            &mut out,
            ["method", "tp", "fp", "fn", "precision", "recall", "tp_rate", "deg_recall", "deg_fp", "adapted"],
        );
        for (method, s) in &self.per_method {
            let o = &s.report.overall;
            let d = &s.report.degraded;
            w(
                &mut out,
                [
                    method.name(),
                    &o.counts.tp.to_string(),
                    &o.counts.fp.to_string(),
                    &o.counts.fn_.to_string(),
                    &format!("{:.4}", o.precision),
                    &format!("{:.4}", o.recall),
                    &format!("{:.4}", o.tp_rate),
                    &format!("{:.4}", d.recall),
                    &d.counts.fp.to_string(),
                    &s.adaptations.to_string(),
                ],
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopOutput {
    pub report: ClosedLoopReport,
    pub runs: BTreeMap<Method, MethodRun>,
}

fn run_method(
    method: Method,
    scene: &super::scene::Scene,
    detector: &DetectorModel,
    axioms: &[AxiomFormula<f64>],
    targets: &DesiredTargets<f64>,
    cfg: &LoopConfig,
) -> Result<MethodRun> {
    let mut monitor = Monitor::new(axioms.to_vec(), cfg.monitor.clone())?;
    let mut detections = Vec::with_capacity(scene.frames.len());
    let mut adaptations = Vec::new();
    let mut flagged_frames = 0;
    for (t, (raw, gt)) in scene.frames.iter().zip(&scene.gt).enumerate() {
        let frame = match method {
            Method::HistEq => equalize_histogram(raw),
            _ => raw.clone(),
        };
        let before = (method == Method::Cogsense).then(|| monitor.clone());
        let mut report = monitor.observe(t, synthetic_detect(t, &frame, gt, detector)?, &frame)?;

        if let Some(before) = before.filter(|_| report.any_erroneous()) {
            let (adapted, cmd) = adapt_frame(&frame, &report.detections, &report.verdicts, targets, cfg.mode)?;
            if cmd.fired() {
                // the re-detection replaces the first pass, so rewind the monitor
                monitor = before;
                report = monitor.observe(t, synthetic_detect(t, &adapted, gt, detector)?, &adapted)?;
                adaptations.push(AdaptationLogEntry {
                    frame: t,
                    delta_c: cmd.delta_c,
                    bound_b: cmd.bound_b,
                    i_max: cmd.i_max,
                    i_min: cmd.i_min,
                    mode: cfg.mode,
                    flagged: cmd.flagged_detections,
                });
            }
        }
        if report.any_erroneous() {
            flagged_frames += 1;
        }
        detections.push(report.detections);
    }
    let report = evaluate(&scene.tracks(), &detections, &cfg.eval);
    Ok(MethodRun {
        report,
        detections,
        adaptations,
        flagged_frames,
    })
}

/// Runs every requested method on the same generated scene with the same detector seeds.
pub fn run_closed_loop(
    scene: &SceneConfig,
    detector: &DetectorModel,
    axioms: &[AxiomFormula<f64>],
    targets: &DesiredTargets<f64>,
    methods: &[Method],
    cfg: &LoopConfig,
) -> Result<ClosedLoopOutput> {
    if axioms.is_empty() {
        return Err(Error::EmptyAxiomSet("the closed loop needs at least one axiom".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    detector.validate()?;
    let generated = generate_scene(scene)?;
    let mut runs = BTreeMap::new();
    for &method in methods {
        log::info!("running {method} over {} frames", generated.frames.len());
        runs.insert(method, run_method(method, &generated, detector, axioms, targets, cfg)?);
    }
    let per_method = runs
        .iter()
        .map(|(m, r)| {
            (
                *m,
                MethodSummary {
                    report: r.report.clone(),
                    adaptations: r.adaptations.len(),
                    flagged_frames: r.flagged_frames,
                },
            )
        })
        .collect();
    Ok(ClosedLoopOutput {
        report: ClosedLoopReport {
            frames: generated.frames.len(),
            iou_threshold: cfg.eval.iou_threshold,
            operating_threshold: cfg.eval.operating_threshold,
            per_method,
        },
        runs,
    })
}
