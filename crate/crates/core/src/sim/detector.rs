//! Mock detector whose hit probability is a sigmoid of the object's measured contrast.
//!
//! Every random draw is keyed by `(seed, frame, object)`, so running the detector twice on
//! two versions of the same frame reuses the same uniforms and noise. Raising an object's
//! contrast can then only turn a miss into a hit, never the reverse.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::keyed_rng;
use crate::error::{Error, Result};
use crate::model::{crop, BoundingBox, GrayImage};
use crate::probes::michelson_contrast;

type Detection = crate::model::Detection<f64>;

const STREAM_OBJECT: u64 = 16;
const STREAM_SPURIOUS: u64 = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    /// Contrast at which an object is found half of the time.
    pub contrast_midpoint: f64,
    pub contrast_slope: f64,
    /// Expected spurious boxes per frame.
    pub base_fp_rate: f64,
    pub bbox_jitter_std: f64,
    /// Extra box jitter at zero detection probability; scales with `1 - p_detect`.
    pub low_contrast_jitter_px: f64,
    pub confidence_noise_std: f64,
    /// Side length range of spurious boxes.
    pub fp_size: [f64; 2],
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            contrast_midpoint: 0.2,
            contrast_slope: 0.015,
            base_fp_rate: 0.1,
            bbox_jitter_std: 0.5,
            low_contrast_jitter_px: 6.0,
            confidence_noise_std: 0.05,
            fp_size: [12.0, 28.0],
            seed: 11,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = [
            ("base_fp_rate", self.base_fp_rate),
            ("bbox_jitter_std", self.bbox_jitter_std),
            ("low_contrast_jitter_px", self.low_contrast_jitter_px),
            ("confidence_noise_std", self.confidence_noise_std),
        ];
        if let Some((key, v)) = finite_nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("{key} = {v} must be finite and non-negative")));
        }
        if !(self.contrast_slope > 0.0 && self.contrast_slope.is_finite()) {
            return Err(Error::Config(format!("contrast_slope = {} must be positive", self.contrast_slope)));
        }
        if !self.contrast_midpoint.is_finite() {
            return Err(Error::Config("contrast_midpoint must be finite".into()));
        }
        let [a, b] = self.fp_size;
        if !(a >= 1.0 && a <= b && b.is_finite()) {
            return Err(Error::Config(format!("fp_size [{a}, {b}] must be ordered and at least 1")));
        }
        Ok(())
    }

    pub fn p_detect(&self, contrast: f64) -> f64 {
        1.0 / (1.0 + (-(contrast - self.contrast_midpoint) / self.contrast_slope).exp())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One frame of detections. Ground-truth objects come first, in `gt` order, followed by
/// spurious boxes. Outputs carry no track IDs.
pub fn synthetic_detect(
    frame_index: usize,
    frame: &GrayImage,
    gt: &[Detection],
    model: &DetectorModel,
) -> Result<Vec<Detection>> {
    let (fw, fh) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(gt.len() + 1);
    for (slot, obj) in gt.iter().enumerate() {
        let key = obj.track_id.unwrap_or(slot as u64);
        let mut rng = keyed_rng(model.seed, STREAM_OBJECT, frame_index as u64, key);
        let u: f64 = rng.random();
        let z = [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)];
        let e = normal(&mut rng);

        let contrast: f64 = michelson_contrast(&crop(frame, &obj.bbox)?);
        let p = model.p_detect(contrast);
        if u >= p {
            continue;
        }
        let sigma = model.bbox_jitter_std + model.low_contrast_jitter_px * (1.0 - p);
        let b = &obj.bbox;
        let Ok(jittered) = BoundingBox::new(
            b.x + sigma * z[0],
            b.y + sigma * z[1],
            (b.w + sigma * z[2]).max(1.0),
            (b.h + sigma * z[3]).max(1.0),
        )
        .and_then(|j| j.clamp_to_frame(fw, fh)) else {
            continue;
        };
        let conf = (p + model.confidence_noise_std * e).clamp(0.0, 1.0);
        out.push(Detection::new(frame_index, jittered, obj.class_id, conf)?);
    }

    if model.base_fp_rate > 0.0 {
        let mut rng = keyed_rng(model.seed, STREAM_SPURIOUS, frame_index as u64, 0);
        let poisson = Poisson::new(model.base_fp_rate).map_err(|e| Error::Config(e.to_string()))?;
        let n = poisson.sample(&mut rng) as usize;
        let [s0, s1] = model.fp_size;
        for _ in 0..n {
            let w = rng.random_range(s0..=s1).min(fw as f64);
            let h = rng.random_range(s0..=s1).min(fh as f64);
            let x = rng.random_range(0.0..=fw as f64 - w);
            let y = rng.random_range(0.0..=fh as f64 - h);
            let conf = rng.random_range(0.05..0.5);
            out.push(Detection::new(frame_index, BoundingBox::new(x, y, w, h)?, 0, conf)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{generate_scene, SceneConfig};

    #[test]
    fn sigmoid_examples() {
        let m = DetectorModel::default();
        assert_eq!(m.p_detect(m.contrast_midpoint), 0.5);
        assert!(m.p_detect(m.contrast_midpoint + 10.0 * m.contrast_slope) > 0.9999);
        assert!(m.p_detect(m.contrast_midpoint - 10.0 * m.contrast_slope) < 1e-4);
    }

    fn noiseless() -> DetectorModel {
        DetectorModel {
            contrast_midpoint: 0.0,
            contrast_slope: 0.001,
            base_fp_rate: 0.0,
            bbox_jitter_std: 0.0,
            low_contrast_jitter_px: 0.0,
            confidence_noise_std: 0.0,
            ..DetectorModel::default()
        }
    }

    #[test]
    fn noiseless_limit_reproduces_ground_truth() {
        let scene = generate_scene(&SceneConfig {
            frame_count: 5,
            ..SceneConfig::default()
        })
        .unwrap();
        for (t, (frame, gt)) in scene.frames.iter().zip(&scene.gt).enumerate() {
            let dets = synthetic_detect(t, frame, gt, &noiseless()).unwrap();
            assert_eq!(dets.len(), gt.len());
            for (d, g) in dets.iter().zip(gt) {
                assert_eq!(d.bbox, g.bbox);
                assert_eq!(d.confidence, 1.0);
                assert_eq!(d.track_id, None);
            }
        }
    }

    #[test]
    fn undetectable_objects_yield_only_spurious_boxes() {
        let scene = generate_scene(&SceneConfig {
            frame_count: 50,
            ..SceneConfig::default()
        })
        .unwrap();
        let m = DetectorModel {
            contrast_midpoint: 5.0,
            base_fp_rate: 0.5,
            ..DetectorModel::default()
        };
        let mut total = 0;
        for (t, (frame, gt)) in scene.frames.iter().zip(&scene.gt).enumerate() {
            let dets = synthetic_detect(t, frame, gt, &m).unwrap();
            assert!(dets.iter().all(|d| (0.05..0.5).contains(&d.confidence)));
            total += dets.len();
        }
        assert!(total > 10 && total < 45, "{total}");
    }

    #[test]
    fn raising_contrast_never_loses_a_detection() {
        let scene = generate_scene(&SceneConfig {
            frame_count: 60,
            degradation: crate::sim::scene::DegradationSchedule::Constant { gain: 0.5 },
            ..SceneConfig::default()
        })
        .unwrap();
        let m = DetectorModel::default();
        for (t, (frame, gt)) in scene.frames.iter().zip(&scene.gt).enumerate() {
            let mut brighter = frame.clone();
            for p in brighter.pixels_mut() {
                *p = (100.0 + (*p as f64 - 100.0) * 1.5).round().clamp(0.0, 255.0) as u8;
            }
            let before = synthetic_detect(t, frame, gt, &m).unwrap();
            let after = synthetic_detect(t, &brighter, gt, &m).unwrap();
            // spurious boxes are keyed by frame only, so they are the same in both runs
            assert!(after.len() >= before.len());
        }
    }
}
