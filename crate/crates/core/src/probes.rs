//! Scalar probe signals computed from a detection, its crop and its track history.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{crop, Detection, GrayImage, Track};
use crate::scalar::{median_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeId {
    SizePx2,
    Aspect,
    Confidence,
    Contrast,
    EntropyBits,
    LocDevPx,
    BboxDevRel,
    IdConsistency,
}

impl ProbeId {
    pub const ALL: [ProbeId; 8] = [
        ProbeId::SizePx2,
        ProbeId::Aspect,
        ProbeId::Confidence,
        ProbeId::Contrast,
        ProbeId::EntropyBits,
        ProbeId::LocDevPx,
        ProbeId::BboxDevRel,
        ProbeId::IdConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeId::SizePx2 => "size_px2",
            ProbeId::Aspect => "aspect",
            ProbeId::Confidence => "confidence",
            ProbeId::Contrast => "contrast",
            ProbeId::EntropyBits => "entropy_bits",
            ProbeId::LocDevPx => "loc_dev_px",
            ProbeId::BboxDevRel => "bbox_dev_rel",
            ProbeId::IdConsistency => "id_consistency",
        }
    }

    /// Non-negative deviation probes, calibrated with one-sided `<= c` bounds.
    pub fn is_deviation(self) -> bool {
        matches!(self, ProbeId::LocDevPx | ProbeId::BboxDevRel)
    }

    /// Probes that need track history and may be undefined.
    pub fn is_temporal(self) -> bool {
        matches!(self, ProbeId::LocDevPx | ProbeId::BboxDevRel | ProbeId::IdConsistency)
    }
}

impl fmt::Display for ProbeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ProbeId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown probe `{s}`"))
    }
}

/// Probe values for one detection. Temporal probes are `None` while the track is too young.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProbeVector<T: Scalar> {
    pub size_px2: T,
    pub aspect: T,
    pub confidence: T,
    pub contrast: T,
    pub entropy_bits: T,
    pub loc_dev_px: Option<T>,
    pub bbox_dev_rel: Option<T>,
    pub id_consistency: Option<T>,
}

impl<T: Scalar> ProbeVector<T> {
    pub fn get(&self, probe: ProbeId) -> Option<T> {
        match probe {
            ProbeId::SizePx2 => Some(self.size_px2),
            ProbeId::Aspect => Some(self.aspect),
            ProbeId::Confidence => Some(self.confidence),
            ProbeId::Contrast => Some(self.contrast),
            ProbeId::EntropyBits => Some(self.entropy_bits),
            ProbeId::LocDevPx => self.loc_dev_px,
            ProbeId::BboxDevRel => self.bbox_dev_rel,
            ProbeId::IdConsistency => self.id_consistency,
        }
    }

    pub fn undefined(&self) -> Vec<ProbeId> {
        ProbeId::ALL.into_iter().filter(|p| self.get(*p).is_none()).collect()
    }
}

/// Temporal window shared by the history-based probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Window length M in frames.
    pub window: usize,
    /// Past detections required before deviation probes are defined.
    pub min_history: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 10,
            min_history: 3,
        }
    }
}

impl WindowConfig {
    pub fn new(window: usize, min_history: usize) -> Result<Self> {
        let cfg = Self { window, min_history };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidWindow(format!("window must be at least 2, got {}", self.window)));
        }
        if self.min_history == 0 || self.min_history > self.window {
            return Err(Error::InvalidWindow(format!(
                "min_history must be in 1..={}, got {}",
                self.window, self.min_history
            )));
        }
        Ok(())
    }
}

/// Michelson contrast `(max - min) / (max + min)`; 0 for uniform crops.
pub fn michelson_contrast<T: Scalar>(crop: &GrayImage) -> T {
    let (lo, hi) = crop.extremes();
    if lo == hi {
        return T::zero();
    }
    T::from_count((hi - lo) as usize) / T::from_count(hi as usize + lo as usize)
}

/// Shannon entropy in bits of the crop's intensity histogram.
pub fn shannon_entropy<T: Scalar>(crop: &GrayImage, bins: usize) -> Result<T> {
    if bins == 0 || bins > 256 || 256 % bins != 0 {
        return Err(Error::InvalidBins(bins));
    }
    let width = 256 / bins;
    let mut hist = vec![0usize; bins];
    for &v in crop.pixels() {
        hist[v as usize / width] += 1;
    }
    let n = T::from_count(crop.pixels().len());
    let mut h = T::zero();
    for &count in hist.iter().filter(|&&c| c > 0) {
        let p = T::from_count(count) / n;
        h -= p * p.log2();
    }
    // -0.0 for a single occupied bin
    Ok(h.max(T::zero()))
}

/// History `[t_k - M, t_k - 1]` and the detection at `t_k`, if the track is old enough.
fn history_and_current<'a, T: Scalar>(
    track: &'a Track<T>,
    t_k: usize,
    cfg: &WindowConfig,
) -> Option<(&'a [Detection<T>], &'a Detection<T>)> {
    let current = track.at(t_k)?;
    if t_k == 0 {
        return None;
    }
    let history = track.in_frames(t_k.saturating_sub(cfg.window)..=t_k - 1);
    (history.len() >= cfg.min_history.max(1)).then_some((history, current))
}

/// Least-squares line through `(t, v)` evaluated at `at`.
fn linear_extrapolate<T: Scalar>(points: &[(T, T)], at: T) -> T {
    let n = T::from_count(points.len());
    let t_mean = points.iter().map(|p| p.0).sum::<T>() / n;
    let v_mean = points.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.0 - t_mean) * (p.0 - t_mean)).sum();
    if sxx == T::zero() {
        return v_mean;
    }
    let sxy: T = points.iter().map(|p| (p.0 - t_mean) * (p.1 - v_mean)).sum();
    v_mean + sxy / sxx * (at - t_mean)
}

/// Distance between the observed center at `t_k` and a per-axis linear fit of the window.
pub fn localization_deviation<T: Scalar>(track: &Track<T>, t_k: usize, cfg: &WindowConfig) -> Option<T> {
    let (history, current) = history_and_current(track, t_k, cfg)?;
    let xs: Vec<(T, T)> = history
        .iter()
        .map(|d| (T::from_count(d.frame_index), d.bbox.center().0))
        .collect();
    let ys: Vec<(T, T)> = history
        .iter()
        .map(|d| (T::from_count(d.frame_index), d.bbox.center().1))
        .collect();
    let at = T::from_count(t_k);
    let (px, py) = (linear_extrapolate(&xs, at), linear_extrapolate(&ys, at));
    let (cx, cy) = current.bbox.center();
    Some((cx - px).hypot(cy - py))
}

/// `|area(t_k) - median window area| / median window area`.
pub fn bbox_size_deviation<T: Scalar>(track: &Track<T>, t_k: usize, cfg: &WindowConfig) -> Option<T> {
    let (history, current) = history_and_current(track, t_k, cfg)?;
    let mut areas: Vec<T> = history.iter().map(|d| d.bbox.area()).collect();
    let desired = median_in_place(&mut areas)?;
    Some((current.bbox.area() - desired).abs() / desired)
}

/// Fraction of the M frames ending at `t_k` in which the track was detected.
/// Undefined until a full window of frames exists.
pub fn id_consistency<T: Scalar>(track: &Track<T>, t_k: usize, cfg: &WindowConfig) -> Option<T> {
    if t_k + 1 < cfg.window {
        return None;
    }
    let present = track.in_frames(t_k + 1 - cfg.window..=t_k).len();
    Some(T::from_count(present) / T::from_count(cfg.window))
}

pub const ENTROPY_BINS: usize = 256;

pub fn compute_probe_vector<T: Scalar>(
    det: &Detection<T>,
    track: &Track<T>,
    img: &GrayImage,
    t_k: usize,
    cfg: &WindowConfig,
) -> Result<ProbeVector<T>> {
    let patch = crop(img, &det.bbox)?;
    Ok(ProbeVector {
        size_px2: det.bbox.area(),
        aspect: det.bbox.aspect(),
        confidence: det.confidence,
        contrast: michelson_contrast(&patch),
        entropy_bits: shannon_entropy(&patch, ENTROPY_BINS)?,
        loc_dev_px: localization_deviation(track, t_k, cfg),
        bbox_dev_rel: bbox_size_deviation(track, t_k, cfg),
        id_consistency: id_consistency(track, t_k, cfg),
    })
}

/// Ground-truth label of a calibration sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    TruePositive,
    FalsePositive,
}

/// One line of a probe dump: all eight probes of one detection, `null` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProbeRecord<T: Scalar> {
    pub frame: usize,
    pub track_id: u64,
    pub class: u32,
    #[serde(flatten)]
    pub probes: ProbeVector<T>,
    pub undefined: Vec<ProbeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl<T: Scalar> ProbeRecord<T> {
    pub fn new(det: &Detection<T>, probes: ProbeVector<T>, label: Option<Label>) -> Self {
        Self {
            frame: det.frame_index,
            track_id: det.track_id.unwrap_or_default(),
            class: det.class_id,
            undefined: probes.undefined(),
            probes,
            label,
        }
    }
}
