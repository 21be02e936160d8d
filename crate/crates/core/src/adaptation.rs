//! Contrast correction: pick the contrast change that best fits the detected boxes,
//! convert it to a histogram expansion and remap the frame.
//!
//! For a region with extremes `I_max`, `I_min`, stretching the range symmetrically by `B`
//! on both ends keeps `I_max + I_min` fixed, so the Michelson contrast moves by exactly
//! `2B / (I_max + I_min)`. Solving for a contrast change `Δc` gives
//! `B = Δc (I_max + I_min) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{crop, Detection, GrayImage};
use crate::probes::michelson_contrast;
use crate::pstl::DetectionVerdict;
use crate::scalar::{median_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdaptationCommand<T: Scalar> {
    /// Signed contrast change applied to the frame.
    pub delta_c: T,
    /// Signed histogram expansion in intensity levels.
    pub bound_b: T,
    pub i_max: T,
    pub i_min: T,
    pub source_detections: usize,
    pub flagged_detections: usize,
}

impl<T: Scalar> AdaptationCommand<T> {
    pub fn identity(source_detections: usize, flagged_detections: usize) -> Self {
        Self {
            delta_c: T::zero(),
            bound_b: T::zero(),
            i_max: T::zero(),
            i_min: T::zero(),
            source_detections,
            flagged_detections,
        }
    }

    pub fn fired(&self) -> bool {
        self.bound_b != T::zero()
    }
}

/// Desired values learned from true positives during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DesiredTargets<T: Scalar> {
    pub contrast: T,
    /// Monitored only; there is no entropy actuator.
    pub entropy: T,
    /// Corrections with `|Δc|` at or below this are not applied.
    #[serde(default)]
    pub contrast_tolerance: T,
}

impl<T: Scalar> DesiredTargets<T> {
    pub fn new(contrast: T, entropy: T) -> Result<Self> {
        if !(contrast >= T::zero() && contrast <= T::one()) {
            return Err(Error::Config(format!("desired contrast {contrast} outside [0, 1]")));
        }
        Ok(Self {
            contrast,
            entropy,
            contrast_tolerance: T::zero(),
        })
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.contrast_tolerance = tolerance.abs();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    #[default]
    FullFrame,
    RoiOnly,
}

/// Minimizer of `Σ |c_i - c_D - Δc|`: the median deviation `median(c) - c_D`.
/// Even counts use the midpoint of the two central values.
pub fn optimal_contrast_delta<T: Scalar>(contrasts: &[T], desired: T) -> Result<T> {
    let mut c = contrasts.to_vec();
    let m = median_in_place(&mut c).ok_or(Error::NoDetections)?;
    Ok(m - desired)
}

pub fn histogram_bound<T: Scalar>(delta_c: T, i_max: T, i_min: T) -> T {
    delta_c * (i_max + i_min) / T::lit(2.0)
}

fn remap_lut<T: Scalar>(bound_b: T, i_max: T, i_min: T) -> [u8; 256] {
    let two = T::lit(2.0);
    let mid = (i_max + i_min) / two;
    // a negative gain would invert the image; collapse onto the midpoint instead
    let gain = ((i_max - i_min + two * bound_b) / (i_max - i_min)).max(T::zero());
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        let x = (T::from_count(v) - mid) * gain + mid;
        *out = x.round().max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(0);
    }
    lut
}

/// Linear remap sending `i_min -> i_min - B` and `i_max -> i_max + B`, rounded half away
/// from zero and clamped to `[0, 255]`. Images with `i_min >= i_max` come back unchanged.
pub fn apply_contrast<T: Scalar>(img: &GrayImage, bound_b: T, i_max: T, i_min: T) -> GrayImage {
    if !(i_min < i_max) {
        log::warn!("cannot remap a uniform intensity range ({i_min}..{i_max}), frame left unchanged");
        return img.clone();
    }
    let lut = remap_lut(bound_b, i_max, i_min);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        *p = lut[*p as usize];
    }
    out
}

/// Pixels covered by at least one box.
fn box_mask<T: Scalar>(img: &GrayImage, detections: &[Detection<T>]) -> Vec<bool> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut mask = vec![false; img.pixels().len()];
    for d in detections {
        let (c0, c1, r0, r1) = d.bbox.pixel_span();
        for r in r0.max(0)..r1.min(h) {
            for c in c0.max(0)..c1.min(w) {
                mask[(r * w + c) as usize] = true;
            }
        }
    }
    mask
}

/// Signed contrast change toward the target: `c_D - median(c)`.
pub fn contrast_correction<T: Scalar>(contrasts: &[T], desired: T) -> Result<T> {
    Ok(-optimal_contrast_delta(contrasts, desired)?)
}

/// Computes and applies one contrast correction for a frame.
///
/// Nothing happens unless at least one verdict is erroneous. The correction uses the
/// contrasts of every current detection; the remap range is measured over the union of
/// the detection boxes.
pub fn adapt_frame<T: Scalar>(
    img: &GrayImage,
    detections: &[Detection<T>],
    verdicts: &[DetectionVerdict<T>],
    targets: &DesiredTargets<T>,
    mode: AdaptMode,
) -> Result<(GrayImage, AdaptationCommand<T>)> {
    let flagged = verdicts.iter().filter(|v| v.erroneous).count();
    if flagged == 0 || detections.is_empty() {
        return Ok((img.clone(), AdaptationCommand::identity(detections.len(), flagged)));
    }
    let contrasts = detections
        .iter()
        .map(|d| crop(img, &d.bbox).map(|c| michelson_contrast::<T>(&c)))
        .collect::<Result<Vec<_>>>()?;
    let delta_c = contrast_correction(&contrasts, targets.contrast)?;
    if delta_c.abs() <= targets.contrast_tolerance {
        return Ok((img.clone(), AdaptationCommand::identity(detections.len(), flagged)));
    }

    let mask = box_mask(img, detections);
    let (lo, hi) = img
        .pixels()
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .fold((u8::MAX, u8::MIN), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
    let (i_max, i_min) = (T::from_count(hi as usize), T::from_count(lo as usize));
    let bound_b = histogram_bound(delta_c, i_max, i_min);
    let command = AdaptationCommand {
        delta_c,
        bound_b,
        i_max,
        i_min,
        source_detections: detections.len(),
        flagged_detections: flagged,
    };
    if !(i_min < i_max) {
        log::warn!("detection boxes are uniform, contrast correction skipped");
        return Ok((img.clone(), AdaptationCommand::identity(detections.len(), flagged)));
    }

    let out = match mode {
        AdaptMode::FullFrame => apply_contrast(img, bound_b, i_max, i_min),
        AdaptMode::RoiOnly => {
            let lut = remap_lut(bound_b, i_max, i_min);
            let mut out = img.clone();
            for (p, m) in out.pixels_mut().iter_mut().zip(&mask) {
                if *m {
                    *p = lut[*p as usize];
                }
            }
            out
        }
    };
    Ok((out, command))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    /// Objective `Σ |c_i - c_D - Δc|` minimized by scanning Δc on a grid.
    fn grid_argmin(c: &[f64], c_d: f64) -> (f64, f64, f64) {
        let obj = |d: f64| c.iter().map(|x| (x - c_d - d).abs()).sum::<f64>();
        let mut best = f64::INFINITY;
        let (mut lo, mut hi) = (0.0, 0.0);
        for i in -10_000..=10_000 {
            let d = i as f64 * 1e-4;
            let v = obj(d);
            if v < best - 1e-12 {
                best = v;
                lo = d;
                hi = d;
            } else if (v - best).abs() <= 1e-12 {
                hi = d;
            }
        }
        (best, lo, hi)
    }

    #[test]
    fn l1_examples_against_grid() {
        let d: f64 = optimal_contrast_delta(&[0.2, 0.3, 0.5], 0.4).unwrap();
        assert!((d + 0.1).abs() < 1e-12);
        let (_, lo, hi) = grid_argmin(&[0.2, 0.3, 0.5], 0.4);
        assert!((lo + 0.1).abs() < 1e-9 && (hi + 0.1).abs() < 1e-9);

        assert_eq!(optimal_contrast_delta(&[0.35], 0.35).unwrap(), 0.0);

        let d: f64 = optimal_contrast_delta(&[0.2, 0.4], 0.25).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
        let (_, lo, hi) = grid_argmin(&[0.2, 0.4], 0.25);
        assert!((lo + 0.05).abs() < 1e-9 && (hi - 0.15).abs() < 1e-9, "{lo} {hi}");
        assert!((d - (lo + hi) / 2.0).abs() < 1e-9);

        assert!(matches!(optimal_contrast_delta::<f64>(&[], 0.3), Err(Error::NoDetections)));
    }

    #[test]
    fn bound_examples() {
        assert!((histogram_bound(0.1f64, 200.0, 100.0) - 15.0).abs() < 1e-12);
        assert_eq!(histogram_bound(0.0f64, 200.0, 100.0), 0.0);
        assert!((histogram_bound(-0.1f64, 200.0, 100.0) + 15.0).abs() < 1e-12);
    }

    fn img_of(values: &[u8]) -> GrayImage {
        GrayImage::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn remap_examples() {
        let out = apply_contrast(&img_of(&[100, 200, 150]), 15.0, 200.0, 100.0);
        assert_eq!(out.pixels(), &[85, 215, 150]);
        let c: f64 = michelson_contrast(&out);
        assert!((c - 130.0 / 300.0).abs() < 1e-12);
        assert!((c - (1.0 / 3.0 + 0.1)).abs() < 1e-12);

        let img = img_of(&[3, 100, 200, 17]);
        assert_eq!(apply_contrast(&img, 0.0, 200.0, 3.0), img);

        let out = apply_contrast(&img_of(&[10, 250]), 20.0, 250.0, 10.0);
        assert_eq!(out.pixels(), &[0, 255]);

        let flat = img_of(&[9, 9]);
        assert_eq!(apply_contrast(&flat, 5.0, 9.0, 9.0), flat);
    }

    #[test]
    fn excessive_reduction_collapses_instead_of_inverting() {
        let out = apply_contrast(&img_of(&[100, 200]), -80.0, 200.0, 100.0);
        assert_eq!(out.pixels(), &[150, 150]);
    }

    fn flagged(n: usize) -> Vec<DetectionVerdict<f64>> {
        (0..n)
            .map(|i| DetectionVerdict {
                frame: 0,
                track_id: i as u64,
                detection_index: i,
                per_axiom: vec![],
                erroneous: i == 0,
                violation_count: (i == 0) as usize,
            })
            .collect()
    }

    /// 20x20 frame at 50 with a 4x4 box holding 80 and 120.
    fn scene() -> (GrayImage, Vec<Detection<f64>>) {
        let img = GrayImage::from_fn(20, 20, |r, c| match (r, c) {
            (5..=8, 5..=8) if (r + c) % 2 == 0 => 120,
            (5..=8, 5..=8) => 80,
            _ => 50,
        })
        .unwrap();
        let det = Detection::new(0, BoundingBox::new(5.0, 5.0, 4.0, 4.0).unwrap(), 0, 0.8).unwrap();
        (img, vec![det])
    }

    #[test]
    fn adapt_frame_single_detection() {
        let (img, dets) = scene();
        let targets = DesiredTargets::new(0.5, 3.0).unwrap();
        let (out, cmd) = adapt_frame(&img, &dets, &flagged(1), &targets, AdaptMode::FullFrame).unwrap();
        // crop contrast 40/200 = 0.2; target 0.5
        assert!((cmd.delta_c - 0.3).abs() < 1e-12);
        assert!((cmd.bound_b - 30.0).abs() < 1e-9);
        assert_eq!((cmd.i_max, cmd.i_min), (120.0, 80.0));
        assert_eq!(cmd.bound_b, histogram_bound(cmd.delta_c, cmd.i_max, cmd.i_min));
        // grid scan agrees on the sign-flipped L1 minimizer
        let (_, lo, hi) = grid_argmin(&[0.2], 0.5);
        assert!((-cmd.delta_c - (lo + hi) / 2.0).abs() < 1e-9);
        let patch = crop(&out, &dets[0].bbox).unwrap();
        assert_eq!(patch.extremes(), (50, 150));
        assert!((michelson_contrast::<f64>(&patch) - 0.5).abs() < 1e-12);
        // background 50 stretched around mid 100 with gain 2.5
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn no_flags_is_identity() {
        let (img, dets) = scene();
        let targets = DesiredTargets::new(0.5, 3.0).unwrap();
        let mut v = flagged(1);
        v[0].erroneous = false;
        let (out, cmd) = adapt_frame(&img, &dets, &v, &targets, AdaptMode::FullFrame).unwrap();
        assert_eq!(out, img);
        assert_eq!(cmd.delta_c, 0.0);
        assert!(!cmd.fired());
        let (out, cmd) = adapt_frame(&img, &[], &flagged(1), &targets, AdaptMode::FullFrame).unwrap();
        assert_eq!(out, img);
        assert_eq!(cmd.source_detections, 0);
    }

    #[test]
    fn tolerance_suppresses_small_corrections() {
        let (img, dets) = scene();
        let targets = DesiredTargets::new(0.25, 3.0).unwrap().with_tolerance(0.06);
        let (out, cmd) = adapt_frame(&img, &dets, &flagged(1), &targets, AdaptMode::FullFrame).unwrap();
        assert_eq!(out, img);
        assert!(!cmd.fired());
    }

    #[test]
    fn roi_only_leaves_outside_untouched() {
        let (img, dets) = scene();
        let targets = DesiredTargets::new(0.5, 3.0).unwrap();
        let (out, cmd) = adapt_frame(&img, &dets, &flagged(1), &targets, AdaptMode::RoiOnly).unwrap();
        assert!(cmd.fired());
        for r in 0..20 {
            for c in 0..20 {
                let inside = (5..9).contains(&r) && (5..9).contains(&c);
                if !inside {
                    assert_eq!(out.get(r, c), img.get(r, c));
                }
            }
        }
        assert_eq!(crop(&out, &dets[0].bbox).unwrap().extremes(), (50, 150));
    }
}
