//! Synthetic scenes: bright elliptical blobs drifting over a flat background, with a
//! per-frame contrast gain and additive noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::keyed_rng;
use crate::error::{Error, Result};
use crate::model::{BoundingBox, GrayImage, Track};

const STREAM_LAYOUT: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Contrast gain per frame. A gain `g` maps every pixel `v` to `bg + g (v - bg)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegradationSchedule {
    Constant { gain: f64 },
    /// Linear from `start` at the first frame to `end` at the last.
    Ramp { start: f64, end: f64 },
    PerFrame { gains: Vec<f64> },
}

impl Default for DegradationSchedule {
    fn default() -> Self {
        DegradationSchedule::Constant { gain: 1.0 }
    }
}

impl DegradationSchedule {
    pub fn gain(&self, frame: usize, frame_count: usize) -> f64 {
        match self {
            DegradationSchedule::Constant { gain } => *gain,
            DegradationSchedule::Ramp { start, end } => {
                if frame_count < 2 {
                    return *start;
                }
                start + (end - start) * frame as f64 / (frame_count - 1) as f64
            }
            DegradationSchedule::PerFrame { gains } => gains[frame],
        }
    }

    fn validate(&self, frame_count: usize) -> Result<()> {
        let ok = |g: f64| g > 0.0 && g <= 1.0;
        let bad = match self {
            DegradationSchedule::Constant { gain } => (!ok(*gain)).then(|| format!("gain {gain}")),
            DegradationSchedule::Ramp { start, end } => {
                (!ok(*start) || !ok(*end)).then(|| format!("ramp {start} -> {end}"))
            }
            DegradationSchedule::PerFrame { gains } => {
                if gains.len() != frame_count {
                    return Err(Error::Config(format!(
                        "degradation.gains has {} entries for {frame_count} frames",
                        gains.len()
                    )));
                }
                gains.iter().find(|g| !ok(**g)).map(|g| format!("gain {g}"))
            }
        };
        match bad {
            Some(what) => Err(Error::Config(format!("degradation {what} outside (0, 1]"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub object_count: usize,
    /// Inclusive range the per-object intensity is drawn from.
    pub object_intensity: [u8; 2],
    pub background_intensity: u8,
    pub noise_std: f64,
    /// Inclusive range, in pixels, for object width and height.
    pub object_size: [usize; 2],
    /// Range of object speed in pixels per frame.
    pub object_speed: [f64; 2],
    pub degradation: DegradationSchedule,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frame_count: 300,
            width: 160,
            height: 120,
            object_count: 3,
            object_intensity: [160, 200],
            background_intensity: 100,
            noise_std: 2.0,
            object_size: [18, 30],
            object_speed: [0.5, 1.5],
            degradation: DegradationSchedule::default(),
            seed: 1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.frame_count == 0 {
            return fail("frame_count must be positive".into());
        }
        let [s0, s1] = self.object_size;
        if s0 < 2 || s0 > s1 {
            return fail(format!("object_size [{s0}, {s1}] must be ordered and at least 2"));
        }
        if s1 > self.width || s1 > self.height {
            return fail(format!(
                "object_size {s1} does not fit a {}x{} frame",
                self.width, self.height
            ));
        }
        if self.object_intensity[0] > self.object_intensity[1] {
            return fail("object_intensity range is reversed".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std {} must be finite and non-negative", self.noise_std));
        }
        let [v0, v1] = self.object_speed;
        if !(v0 >= 0.0 && v0 <= v1 && v1.is_finite()) {
            return fail(format!("object_speed [{v0}, {v1}] must be ordered and non-negative"));
        }
        self.degradation.validate(self.frame_count)
    }

    pub fn gain(&self, frame: usize) -> f64 {
        self.degradation.gain(frame, self.frame_count)
    }
}

/// Rendered frames with exact ground truth. `gt[t][i]` is object `i` in frame `t`,
/// carrying track ID `i` and confidence 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<GrayImage>,
    pub gt: Vec<Vec<Detection>>,
    pub gains: Vec<f64>,
    pub intensities: Vec<u8>,
}

type Detection = crate::model::Detection<f64>;

impl Scene {
    pub fn tracks(&self) -> Vec<Track<f64>> {
        let mut tracks: Vec<Track<f64>> = (0..self.intensities.len())
            .map(|i| Track::new(i as u64, 0))
            .collect();
        for frame in &self.gt {
            for (track, det) in tracks.iter_mut().zip(frame) {
                track.push(det.clone()).expect("frames are increasing");
            }
        }
        tracks
    }
}

struct Mover {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    w: usize,
    h: usize,
}

fn reflect(pos: &mut f64, vel: &mut f64, limit: f64) {
    if *pos < 0.0 {
        *pos = -*pos;
        *vel = -*vel;
    } else if *pos > limit {
        *pos = 2.0 * limit - *pos;
        *vel = -*vel;
    }
    *pos = pos.clamp(0.0, limit);
}

impl Mover {
    fn step(&mut self, width: usize, height: usize) {
        self.x += self.vx;
        self.y += self.vy;
        reflect(&mut self.x, &mut self.vx, (width - self.w) as f64);
        reflect(&mut self.y, &mut self.vy, (height - self.h) as f64);
    }

    fn bbox(&self) -> BoundingBox<f64> {
        BoundingBox::new(self.x.round(), self.y.round(), self.w as f64, self.h as f64)
            .expect("object box has positive size")
    }
}

/// Whether the center of pixel `(row, col)` lies in the ellipse inscribed in `b`.
fn inside_ellipse(b: &BoundingBox<f64>, row: usize, col: usize) -> bool {
    let (cx, cy) = b.center();
    let dx = (col as f64 + 0.5 - cx) / (b.w / 2.0);
    let dy = (row as f64 + 0.5 - cy) / (b.h / 2.0);
    dx * dx + dy * dy <= 1.0
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = keyed_rng(cfg.seed, STREAM_LAYOUT, 0, 0);
    let [i0, i1] = cfg.object_intensity;
    let [s0, s1] = cfg.object_size;
    let [v0, v1] = cfg.object_speed;
    let mut intensities = Vec::with_capacity(cfg.object_count);
    let mut movers = Vec::with_capacity(cfg.object_count);
    for _ in 0..cfg.object_count {
        intensities.push(rng.random_range(i0..=i1));
        let w = rng.random_range(s0..=s1);
        let h = rng.random_range(s0..=s1);
        let speed = rng.random_range(v0..=v1);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        movers.push(Mover {
            x: rng.random_range(0.0..=(cfg.width - w) as f64),
            y: rng.random_range(0.0..=(cfg.height - h) as f64),
            vx: speed * angle.cos(),
            vy: speed * angle.sin(),
            w,
            h,
        });
    }

    let bg = cfg.background_intensity as f64;
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(cfg.frame_count);
    let mut gt = Vec::with_capacity(cfg.frame_count);
    let mut gains = Vec::with_capacity(cfg.frame_count);
    for t in 0..cfg.frame_count {
        if t > 0 {
            for m in &mut movers {
                m.step(cfg.width, cfg.height);
            }
        }
        let boxes: Vec<BoundingBox<f64>> = movers.iter().map(Mover::bbox).collect();
        let gain = cfg.gain(t);
        let mut noise_rng = keyed_rng(cfg.seed, STREAM_NOISE, t as u64, 0);
        let frame = GrayImage::from_fn(cfg.width, cfg.height, |r, c| {
            let mut v = bg;
            // later objects are drawn on top
            for (b, intensity) in boxes.iter().zip(&intensities) {
                if inside_ellipse(b, r, c) {
                    v = *intensity as f64;
                }
            }
            let v = bg + gain * (v - bg) + noise.sample(&mut noise_rng);
            v.round().clamp(0.0, 255.0) as u8
        })?;
        frames.push(frame);
        gt.push(
            boxes
                .into_iter()
                .enumerate()
                .map(|(i, b)| Detection::new(t, b, 0, 1.0).map(|d| d.with_track(i as u64)))
                .collect::<Result<Vec<_>>>()?,
        );
        gains.push(gain);
    }
    Ok(Scene {
        frames,
        gt,
        gains,
        intensities,
    })
}
