//! Detection metrics against ground truth: counts at an operating threshold and curves
//! swept over confidence thresholds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{iou, Track};

type Detection = crate::model::Detection<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Confidence threshold for the headline counts.
    pub operating_threshold: f64,
    pub sweep: Vec<f64>,
    /// First frame of the degraded segment; the second half of the stream when absent.
    pub degraded_from: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            operating_threshold: 0.1,
            sweep: (0..20).map(|i| i as f64 * 0.05).collect(),
            degraded_from: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `tp / (tp + fp)`; 1 when nothing was detected.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`; 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching, highest IoU first, same class only.
/// Returns for each detection whether it matched a ground-truth box.
pub fn match_frame(gt: &[Detection], detections: &[Detection], iou_threshold: f64) -> Vec<bool> {
    let mut pairs = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            if g.class_id != d.class_id {
                continue;
            }
            let overlap = iou(&g.bbox, &d.bbox);
            if overlap >= iou_threshold && overlap > 0.0 {
                pairs.push((overlap, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_taken = vec![false; gt.len()];
    let mut matched = vec![false; detections.len()];
    for (_, i, j) in pairs {
        if !gt_taken[i] && !matched[j] {
            gt_taken[i] = true;
            matched[j] = true;
        }
    }
    matched
}

pub fn count_frame(gt: &[Detection], detections: &[Detection], iou_threshold: f64) -> Counts {
    let matched = match_frame(gt, detections, iou_threshold);
    let tp = matched.iter().filter(|m| **m).count();
    Counts {
        tp,
        fp: detections.len() - tp,
        fn_: gt.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    /// `tp / (tp + fp)`, the same quantity as precision.
    pub tp_rate: f64,
}

impl Summary {
    fn new(frames: usize, counts: Counts) -> Self {
        Self {
            frames,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            tp_rate: counts.precision(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// False positives per frame.
    pub fp_rate: f64,
    pub tp_rate: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Summary,
    pub degraded: Summary,
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn tp(&self) -> usize {
        self.overall.counts.tp
    }

    pub fn fp(&self) -> usize {
        self.overall.counts.fp
    }

    pub fn fn_(&self) -> usize {
        self.overall.counts.fn_
    }

    pub fn tp_rate(&self) -> f64 {
        self.overall.tp_rate
    }

    pub fn precision_recall_curve(&self) -> Vec<(f64, f64)> {
        self.curve.iter().map(|p| (p.precision, p.recall)).collect()
    }

    pub fn roc_points(&self) -> Vec<(f64, f64)> {
        self.curve.iter().map(|p| (p.fp_rate, p.tp_rate)).collect()
    }

    /// At every shared threshold: `tp_rate` at least as high and `fp_rate` at most as high.
    pub fn roc_dominates(&self, other: &EvalReport) -> bool {
        self.curve.len() == other.curve.len()
            && self.curve.iter().zip(&other.curve).all(|(a, b)| {
                a.threshold == b.threshold && a.tp_rate >= b.tp_rate && a.fp_rate <= b.fp_rate
            })
    }

    /// `threshold,precision,recall,fp_rate,tp_rate`
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall,fp_rate,tp_rate\n");
        for p in &self.curve {
            writeln!(out, "{},{},{},{},{}", p.threshold, p.precision, p.recall, p.fp_rate, p.tp_rate)
                .expect("writing to a string");
        }
        out
    }
}

fn ground_truth_frames(gt_tracks: &[Track<f64>], frames: usize) -> Vec<Vec<Detection>> {
    let mut out = vec![Vec::new(); frames];
    for track in gt_tracks {
        for d in &track.detections {
            if let Some(slot) = out.get_mut(d.frame_index) {
                slot.push(d.clone());
            }
        }
    }
    out
}

/// Scores `detections[t]` against the ground-truth boxes of frame `t`.
pub fn evaluate(gt_tracks: &[Track<f64>], detections: &[Vec<Detection>], cfg: &EvalConfig) -> EvalReport {
    let frames = detections.len();
    let gt = ground_truth_frames(gt_tracks, frames);
    let degraded_from = cfg.degraded_from.unwrap_or(frames / 2).min(frames);

    let counts_at = |threshold: f64, range: std::ops::Range<usize>| {
        let mut total = Counts::default();
        for t in range {
            let kept: Vec<Detection> = detections[t]
                .iter()
                .filter(|d| d.confidence >= threshold)
                .cloned()
                .collect();
            total.add(count_frame(&gt[t], &kept, cfg.iou_threshold));
        }
        total
    };

    let overall = Summary::new(frames, counts_at(cfg.operating_threshold, 0..frames));
    let degraded = Summary::new(
        frames - degraded_from,
        counts_at(cfg.operating_threshold, degraded_from..frames),
    );
    let curve = cfg
        .sweep
        .iter()
        .map(|&threshold| {
            let counts = counts_at(threshold, 0..frames);
            CurvePoint {
                threshold,
                precision: counts.precision(),
                recall: counts.recall(),
                fp_rate: if frames == 0 { 0.0 } else { counts.fp as f64 / frames as f64 },
                tp_rate: counts.precision(),
                counts,
            }
        })
        .collect();
    EvalReport {
        overall,
        degraded,
        curve,
    }
}
