//! Sliding-window evaluation of axioms over per-track probe histories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, GrayImage, Track, Tracker, DEFAULT_IOU_GATE};
use crate::probes::{compute_probe_vector, ProbeId, ProbeVector, WindowConfig};
use crate::pstl::dsl::AxiomFormula;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxiomVerdict<T: Scalar> {
    pub axiom: String,
    pub probe: ProbeId,
    /// In-bounds share of the defined window values; 1 when nothing is defined.
    pub empirical_frequency: T,
    pub pass: bool,
    pub defined_samples: usize,
    pub in_bounds: usize,
}

/// Counts in-bounds values among the defined ones. A window with no defined value passes.
pub fn evaluate_axiom<T: Scalar>(axiom: &AxiomFormula<T>, window: &[Option<T>]) -> AxiomVerdict<T> {
    let defined: Vec<T> = window.iter().flatten().copied().collect();
    let in_bounds = defined.iter().filter(|v| axiom.spec.contains(**v)).count();
    let (empirical_frequency, pass) = if defined.is_empty() {
        (T::one(), true)
    } else {
        let freq = T::from_count(in_bounds) / T::from_count(defined.len());
        (freq, freq >= axiom.spec.p_tp)
    };
    AxiomVerdict {
        axiom: axiom.name.clone(),
        probe: axiom.probe(),
        empirical_frequency,
        pass,
        defined_samples: defined.len(),
        in_bounds,
    }
}

/// Probe vectors of one track, keyed by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeHistory<T: Scalar> {
    frames: BTreeMap<usize, ProbeVector<T>>,
}

impl<T: Scalar> ProbeHistory<T> {
    pub fn new() -> Self {
        Self {
            frames: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, frame: usize, probes: ProbeVector<T>) {
        self.frames.insert(frame, probes);
    }

    pub fn get(&self, frame: usize) -> Option<&ProbeVector<T>> {
        self.frames.get(&frame)
    }

    /// Values of `probe` at frames `t_k - window + 1 ..= t_k`; frames without a detection are `None`.
    pub fn window(&self, probe: ProbeId, t_k: usize, window: usize) -> Vec<Option<T>> {
        let start = (t_k + 1).saturating_sub(window);
        (start..=t_k)
            .map(|f| self.frames.get(&f).and_then(|p| p.get(probe)))
            .collect()
    }

    pub fn forget_before(&mut self, frame: usize) {
        self.frames = self.frames.split_off(&frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DetectionVerdict<T: Scalar> {
    pub frame: usize,
    pub track_id: u64,
    /// Position of the detection within its frame.
    pub detection_index: usize,
    pub per_axiom: Vec<AxiomVerdict<T>>,
    pub erroneous: bool,
    pub violation_count: usize,
}

/// Evaluates every axiom on the track's history; erroneous once `k_min` axioms fail.
pub fn evaluate_detection<T: Scalar>(
    axioms: &[AxiomFormula<T>],
    history: &ProbeHistory<T>,
    t_k: usize,
    k_min: usize,
) -> (Vec<AxiomVerdict<T>>, bool, usize) {
    let per_axiom: Vec<_> = axioms
        .iter()
        .map(|a| evaluate_axiom(a, &history.window(a.probe(), t_k, a.spec.window)))
        .collect();
    let violations = per_axiom.iter().filter(|v| !v.pass).count();
    (per_axiom, violations >= k_min.max(1), violations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdSource {
    /// Use IDs carried by the detections when every detection has one, else track.
    #[default]
    Auto,
    Provided,
    Tracker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub window: WindowConfig,
    pub k_min: usize,
    pub iou_gate: f64,
    pub id_source: IdSource,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            k_min: 1,
            iou_gate: DEFAULT_IOU_GATE,
            id_source: IdSource::Auto,
        }
    }
}

#[derive(Debug, Clone)]
struct TrackState<T: Scalar> {
    track: Track<T>,
    probes: ProbeHistory<T>,
}

/// What the monitor saw and decided for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport<T: Scalar> {
    pub frame: usize,
    /// Input detections with track IDs assigned, in input order.
    pub detections: Vec<Detection<T>>,
    pub probes: Vec<ProbeVector<T>>,
    pub verdicts: Vec<DetectionVerdict<T>>,
}

impl<T: Scalar> FrameReport<T> {
    pub fn any_erroneous(&self) -> bool {
        self.verdicts.iter().any(|v| v.erroneous)
    }
}

/// Causal monitor: a fold over frames that keeps only the history the windows need.
#[derive(Debug, Clone)]
pub struct Monitor<T: Scalar> {
    axioms: Vec<AxiomFormula<T>>,
    cfg: MonitorConfig,
    tracker: Tracker<T>,
    tracks: BTreeMap<u64, TrackState<T>>,
    last_frame: Option<usize>,
}

impl<T: Scalar> Monitor<T> {
    pub fn new(axioms: Vec<AxiomFormula<T>>, cfg: MonitorConfig) -> Result<Self> {
        cfg.window.validate()?;
        Ok(Self {
            tracker: Tracker::new(T::lit(cfg.iou_gate)),
            axioms,
            cfg,
            tracks: BTreeMap::new(),
            last_frame: None,
        })
    }

    pub fn axioms(&self) -> &[AxiomFormula<T>] {
        &self.axioms
    }

    fn horizon(&self) -> usize {
        self.axioms
            .iter()
            .map(|a| a.spec.window)
            .chain([self.cfg.window.window + 1])
            .max()
            .unwrap_or(1)
    }

    pub fn observe(&mut self, frame: usize, detections: Vec<Detection<T>>, image: &GrayImage) -> Result<FrameReport<T>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::Misaligned(format!("frame {frame} observed after frame {last}")));
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != frame) {
            return Err(Error::Misaligned(format!(
                "detection for frame {} passed with frame {frame}",
                d.frame_index
            )));
        }
        let provided = detections.iter().all(|d| d.track_id.is_some());
        let detections = match self.cfg.id_source {
            IdSource::Tracker => self.tracker.update(detections),
            IdSource::Provided if !provided => {
                return Err(Error::InvalidDetection(format!("frame {frame} has detections without track ids")));
            }
            IdSource::Auto if !provided => self.tracker.update(detections),
            _ => detections,
        };

        for d in &detections {
            let id = d.track_id.expect("ids assigned");
            let state = self.tracks.entry(id).or_insert_with(|| TrackState {
                track: Track::new(id, d.class_id),
                probes: ProbeHistory::new(),
            });
            state.track.push(d.clone())?;
        }

        let mut probes = Vec::with_capacity(detections.len());
        let mut verdicts = Vec::with_capacity(detections.len());
        for (i, d) in detections.iter().enumerate() {
            let id = d.track_id.expect("ids assigned");
            let state = self.tracks.get_mut(&id).expect("track registered");
            let pv = compute_probe_vector(d, &state.track, image, frame, &self.cfg.window)?;
            state.probes.insert(frame, pv);
            let (per_axiom, erroneous, violation_count) =
                evaluate_detection(&self.axioms, &state.probes, frame, self.cfg.k_min);
            probes.push(pv);
            verdicts.push(DetectionVerdict {
                frame,
                track_id: id,
                detection_index: i,
                per_axiom,
                erroneous,
                violation_count,
            });
        }

        let keep_from = (frame + 1).saturating_sub(self.horizon());
        self.tracks.retain(|_, s| s.track.last_frame().is_some_and(|f| f >= keep_from));
        for s in self.tracks.values_mut() {
            s.track.forget_before(keep_from);
            s.probes.forget_before(keep_from);
        }
        self.last_frame = Some(frame);

        Ok(FrameReport {
            frame,
            detections,
            probes,
            verdicts,
        })
    }
}

/// Runs the monitor over a whole stream; `frames[t]` and `images[t]` belong to frame `t`.
pub fn monitor_stream<T: Scalar>(
    axioms: &[AxiomFormula<T>],
    frames: &[Vec<Detection<T>>],
    images: &[GrayImage],
    cfg: &MonitorConfig,
) -> Result<Vec<FrameReport<T>>> {
    if frames.len() != images.len() {
        return Err(Error::Misaligned(format!(
            "{} detection frames but {} images",
            frames.len(),
            images.len()
        )));
    }
    let mut cfg = cfg.clone();
    if cfg.id_source == IdSource::Auto {
        let all = frames.iter().flatten().all(|d| d.track_id.is_some());
        cfg.id_source = if all { IdSource::Provided } else { IdSource::Tracker };
    }
    let mut monitor = Monitor::new(axioms.to_vec(), cfg)?;
    frames
        .iter()
        .zip(images)
        .enumerate()
        .map(|(t, (dets, img))| monitor.observe(t, dets.clone(), img))
        .collect()
}
