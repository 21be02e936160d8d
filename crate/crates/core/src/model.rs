//! Frames, detections, tracks and the greedy IoU tracker that assigns track IDs.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned box in pixel coordinates: `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundingBox<T: Scalar> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite coordinates ({x}, {y}, {w}, {h})")));
        }
        if w <= T::zero() || h <= T::zero() {
            return Err(Error::InvalidBox(format!("width and height must be positive, got {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> T {
        self.x + self.w
    }

    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn aspect(&self) -> T {
        self.w / self.h
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.x + self.w / two, self.y + self.h / two)
    }

    /// Intersects the box with `[0, width] x [0, height]`.
    pub fn clamp_to_frame(&self, width: usize, height: usize) -> Result<Self> {
        let (fw, fh) = (T::from_count(width), T::from_count(height));
        let x0 = self.x.max(T::zero());
        let y0 = self.y.max(T::zero());
        let x1 = self.right().min(fw);
        let y1 = self.bottom().min(fh);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidBox(format!(
                "box ({}, {}, {}, {}) does not overlap the {width}x{height} frame",
                self.x, self.y, self.w, self.h
            )));
        }
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Column and row spans `[c0, c1) x [r0, r1)` of the pixels the box touches.
    pub fn pixel_span(&self) -> (i64, i64, i64, i64) {
        let f = |v: T| v.to_f64_lossy();
        (
            f(self.x).floor() as i64,
            f(self.right()).ceil() as i64,
            f(self.y).floor() as i64,
            f(self.bottom()).ceil() as i64,
        )
    }

    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        BoundingBox {
            x: c(self.x),
            y: c(self.y),
            w: c(self.w),
            h: c(self.h),
        }
    }
}

/// Intersection over union. Symmetric, 1 for identical boxes, 0 when disjoint.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Detection<T: Scalar> {
    pub frame_index: usize,
    pub bbox: BoundingBox<T>,
    pub class_id: u32,
    pub confidence: T,
    pub track_id: Option<u64>,
}

impl<T: Scalar> Detection<T> {
    pub fn new(frame_index: usize, bbox: BoundingBox<T>, class_id: u32, confidence: T) -> Result<Self> {
        if !(confidence >= T::zero() && confidence <= T::one()) {
            return Err(Error::InvalidDetection(format!(
                "confidence {confidence} outside [0, 1] at frame {frame_index}"
            )));
        }
        Ok(Self {
            frame_index,
            bbox,
            class_id,
            confidence,
            track_id: None,
        })
    }

    pub fn with_track(mut self, id: u64) -> Self {
        self.track_id = Some(id);
        self
    }
}

/// Time-ordered detections sharing one track ID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Track<T: Scalar> {
    pub track_id: u64,
    pub class_id: u32,
    pub detections: Vec<Detection<T>>,
}

impl<T: Scalar> Track<T> {
    pub fn new(track_id: u64, class_id: u32) -> Self {
        Self {
            track_id,
            class_id,
            detections: Vec::new(),
        }
    }

    /// Appends a detection; frame indices must strictly increase.
    pub fn push(&mut self, mut det: Detection<T>) -> Result<()> {
        if let Some(last) = self.detections.last() {
            if det.frame_index <= last.frame_index {
                return Err(Error::InvalidDetection(format!(
                    "track {} frame {} does not follow frame {}",
                    self.track_id, det.frame_index, last.frame_index
                )));
            }
        }
        det.track_id = Some(self.track_id);
        self.detections.push(det);
        Ok(())
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.detections.first().map(|d| d.frame_index)
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.detections.last().map(|d| d.frame_index)
    }

    pub fn at(&self, frame: usize) -> Option<&Detection<T>> {
        self.detections
            .binary_search_by_key(&frame, |d| d.frame_index)
            .ok()
            .map(|i| &self.detections[i])
    }

    /// Detections whose frame index falls in `frames`.
    pub fn in_frames(&self, frames: RangeInclusive<usize>) -> &[Detection<T>] {
        let lo = self.detections.partition_point(|d| d.frame_index < *frames.start());
        let hi = self.detections.partition_point(|d| d.frame_index <= *frames.end());
        &self.detections[lo..hi.max(lo)]
    }

    /// Drops detections older than `frame`.
    pub fn forget_before(&mut self, frame: usize) {
        let cut = self.detections.partition_point(|d| d.frame_index < frame);
        self.detections.drain(..cut);
    }
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} intensities, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    /// `(min, max)` intensity.
    pub fn extremes(&self) -> (u8, u8) {
        self.data
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Sub-image covering exactly the pixels the box touches.
pub fn crop<T: Scalar>(img: &GrayImage, bbox: &BoundingBox<T>) -> Result<GrayImage> {
    let (c0, c1, r0, r1) = bbox.pixel_span();
    if c0 < 0 || r0 < 0 || c1 > img.width as i64 || r1 > img.height as i64 || c1 <= c0 || r1 <= r0 {
        return Err(Error::CropOutOfBounds {
            x: bbox.x.to_f64_lossy(),
            y: bbox.y.to_f64_lossy(),
            w: bbox.w.to_f64_lossy(),
            h: bbox.h.to_f64_lossy(),
            width: img.width,
            height: img.height,
        });
    }
    let (c0, c1, r0, r1) = (c0 as usize, c1 as usize, r0 as usize, r1 as usize);
    let mut data = Vec::with_capacity((c1 - c0) * (r1 - r0));
    for r in r0..r1 {
        data.extend_from_slice(&img.data[r * img.width + c0..r * img.width + c1]);
    }
    GrayImage::new(c1 - c0, r1 - r0, data)
}

/// Online greedy IoU tracker.
///
/// Each frame, detections are matched to the tracks that were observed in the previous
/// frame, same class only, in descending IoU order. A track that misses one frame is
/// finished; a reappearing object starts a new track. IDs are never reused.
#[derive(Debug, Clone)]
pub struct Tracker<T: Scalar> {
    iou_gate: T,
    next_id: u64,
    live: Vec<(u64, Detection<T>)>,
}

pub const DEFAULT_IOU_GATE: f64 = 0.3;

impl<T: Scalar> Default for Tracker<T> {
    fn default() -> Self {
        Self::new(T::lit(DEFAULT_IOU_GATE))
    }
}

impl<T: Scalar> Tracker<T> {
    pub fn new(iou_gate: T) -> Self {
        Self {
            iou_gate,
            next_id: 0,
            live: Vec::new(),
        }
    }

    /// Assigns track IDs to one frame's detections, preserving their order.
    pub fn update(&mut self, mut detections: Vec<Detection<T>>) -> Vec<Detection<T>> {
        let mut candidates = Vec::new();
        for (i, (_, prev)) in self.live.iter().enumerate() {
            for (j, det) in detections.iter().enumerate() {
                if prev.class_id != det.class_id {
                    continue;
                }
                let overlap = iou(&prev.bbox, &det.bbox);
                if overlap > T::zero() && overlap >= self.iou_gate {
                    candidates.push((overlap, i, j));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut prev_taken = vec![false; self.live.len()];
        let mut assigned: Vec<Option<u64>> = vec![None; detections.len()];
        for (_, i, j) in candidates {
            if prev_taken[i] || assigned[j].is_some() {
                continue;
            }
            prev_taken[i] = true;
            assigned[j] = Some(self.live[i].0);
        }
        for (det, id) in detections.iter_mut().zip(assigned) {
            let id = id.unwrap_or_else(|| {
                let fresh = self.next_id;
                self.next_id += 1;
                fresh
            });
            det.track_id = Some(id);
        }
        self.live = detections
            .iter()
            .map(|d| (d.track_id.expect("assigned"), d.clone()))
            .collect();
        detections
    }
}

/// Runs the greedy tracker over a time-ordered frame sequence.
pub fn associate_tracks<T: Scalar>(frames: &[Vec<Detection<T>>], iou_gate: T) -> Vec<Track<T>> {
    let mut tracker = Tracker::new(iou_gate);
    let mut tracks: BTreeMap<u64, Track<T>> = BTreeMap::new();
    for frame in frames {
        for det in tracker.update(frame.clone()) {
            let id = det.track_id.expect("tracker assigns IDs");
            tracks
                .entry(id)
                .or_insert_with(|| Track::new(id, det.class_id))
                .detections
                .push(det);
        }
    }
    tracks.into_values().collect()
}

/// Groups detections that already carry track IDs.
pub fn tracks_from_ids<T: Scalar>(detections: &[Detection<T>]) -> Result<Vec<Track<T>>> {
    let mut grouped: BTreeMap<u64, Vec<Detection<T>>> = BTreeMap::new();
    for det in detections {
        let id = det.track_id.ok_or_else(|| {
            Error::InvalidDetection(format!("detection at frame {} has no track id", det.frame_index))
        })?;
        grouped.entry(id).or_default().push(det.clone());
    }
    grouped
        .into_iter()
        .map(|(id, mut dets)| {
            dets.sort_by_key(|d| d.frame_index);
            let mut track = Track::new(id, dets[0].class_id);
            for d in dets {
                track.push(d)?;
            }
            Ok(track)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(frame: usize, b: BoundingBox<f64>, class_id: u32) -> Detection<f64> {
        Detection::new(frame, b, class_id, 0.9).unwrap()
    }

    /// Counts unit cells covered by both / either integer box.
    fn raster_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
        let inside = |r: (i32, i32, i32, i32), x: i32, y: i32| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
        let (mut inter, mut uni) = (0, 0);
        for y in -20..40 {
            for x in -20..40 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as i32;
                uni += (ia || ib) as i32;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn iou_cases() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(5.0, 5.0, 1.0, 1.0)), 0.0);
        let expected = raster_iou((0, 0, 2, 2), (1, 1, 2, 2));
        assert!((expected - 1.0 / 7.0).abs() < 1e-15);
        assert!((iou(&a, &bb(1.0, 1.0, 2.0, 2.0)) - expected).abs() < 1e-12);
        // touching edges share no area
        assert_eq!(iou(&a, &bb(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn iou_matches_raster_on_integer_boxes() {
        let boxes = [(0, 0, 5, 3), (2, 1, 4, 4), (3, 3, 1, 1), (-2, 0, 6, 2), (1, 1, 9, 9)];
        for &a in &boxes {
            for &b in &boxes {
                let got = iou(
                    &bb(a.0 as f64, a.1 as f64, a.2 as f64, a.3 as f64),
                    &bb(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64),
                );
                assert!((got - raster_iou(a, b)).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(Detection::new(0, bb(0.0, 0.0, 1.0, 1.0), 0, 1.5).is_err());
    }

    #[test]
    fn clamp_to_frame() {
        let c = bb(-5.0, 8.0, 10.0, 10.0).clamp_to_frame(20, 12).unwrap();
        assert_eq!(c, bb(0.0, 8.0, 5.0, 4.0));
        assert!(bb(30.0, 0.0, 2.0, 2.0).clamp_to_frame(20, 12).is_err());
    }

    fn ramp() -> GrayImage {
        GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as u8).unwrap()
    }

    #[test]
    fn crop_cases() {
        let img = ramp();
        assert_eq!(crop(&img, &bb(0.0, 0.0, 4.0, 4.0)).unwrap(), img);
        let one = crop(&img, &bb(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(one.pixels(), &[img.get(1, 2)]);
        // 2x2 at column 1, row 2: indices r*4+c
        let sub = crop(&img, &bb(1.0, 2.0, 2.0, 2.0)).unwrap();
        let expected: Vec<u8> = [(2, 1), (2, 2), (3, 1), (3, 2)].iter().map(|&(r, c)| (r * 4 + c) as u8).collect();
        assert_eq!(sub.pixels(), expected.as_slice());
        assert!(crop(&img, &bb(3.0, 3.0, 2.0, 1.0)).is_err());
    }

    #[test]
    fn moving_box_is_one_track() {
        let frames: Vec<_> = (0..10).map(|t| vec![det(t, bb(t as f64, 0.0, 10.0, 10.0), 0)]).collect();
        let tracks = associate_tracks(&frames, 0.3);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].detections.len(), 10);
    }

    #[test]
    fn two_static_boxes_two_tracks() {
        let frames: Vec<_> = (0..5)
            .map(|t| vec![det(t, bb(0.0, 0.0, 5.0, 5.0), 0), det(t, bb(50.0, 50.0, 5.0, 5.0), 0)])
            .collect();
        let tracks = associate_tracks(&frames, 0.3);
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.detections.len() == 5));
    }

    #[test]
    fn gap_breaks_track() {
        // frame 0: seen (new id 0); frame 1: empty, id 0 dies; frame 2: new id 1.
        let b = bb(3.0, 3.0, 5.0, 5.0);
        let frames = vec![vec![det(0, b, 0)], vec![], vec![det(2, b, 0)]];
        let tracks = associate_tracks(&frames, 0.3);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].track_id, 0);
        assert_eq!(tracks[0].first_frame(), Some(0));
        assert_eq!(tracks[1].track_id, 1);
        assert_eq!(tracks[1].first_frame(), Some(2));
    }

    #[test]
    fn class_mismatch_never_matches() {
        let b = bb(0.0, 0.0, 5.0, 5.0);
        let frames = vec![vec![det(0, b, 0)], vec![det(1, b, 1)]];
        assert_eq!(associate_tracks(&frames, 0.3).len(), 2);
    }

    #[test]
    fn greedy_takes_highest_iou_first() {
        let prev = bb(0.0, 0.0, 10.0, 10.0);
        let near = bb(1.0, 0.0, 10.0, 10.0);
        let far = bb(4.0, 0.0, 10.0, 10.0);
        let frames = vec![vec![det(0, prev, 0)], vec![det(1, far, 0), det(1, near, 0)]];
        let tracks = associate_tracks(&frames, 0.3);
        let first = tracks.iter().find(|t| t.track_id == 0).unwrap();
        assert_eq!(first.detections[1].bbox, near);
    }

    #[test]
    fn tracks_from_ids_rejects_duplicates() {
        let b = bb(0.0, 0.0, 5.0, 5.0);
        let dets = vec![det(0, b, 0).with_track(4), det(0, b, 0).with_track(4)];
        assert!(tracks_from_ids(&dets).is_err());
        let dets = vec![det(1, b, 0).with_track(4), det(0, b, 0).with_track(4)];
        let tracks = tracks_from_ids(&dets).unwrap();
        assert_eq!(tracks[0].first_frame(), Some(0));
    }

    #[test]
    fn track_window_slices() {
        let mut t = Track::new(1, 0);
        for f in [0usize, 2, 3, 7] {
            t.push(det(f, bb(0.0, 0.0, 1.0, 1.0), 0)).unwrap();
        }
        assert_eq!(t.in_frames(1..=3).len(), 2);
        assert_eq!(t.in_frames(4..=6).len(), 0);
        assert!(t.at(7).is_some() && t.at(6).is_none());
        assert!(t.push(det(7, bb(0.0, 0.0, 1.0, 1.0), 0)).is_err());
        t.forget_before(3);
        assert_eq!(t.first_frame(), Some(3));
    }
}
