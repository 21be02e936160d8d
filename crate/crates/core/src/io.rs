//! File formats: binary PGM frames and JSON-lines records.
//!
//! Detection log, one JSON object per line:
//!
//! ```text
//! {"frame":0,"x":12.0,"y":30.5,"w":20.0,"h":41.0,"class":0,"conf":0.93,"id":4}
//! ```
//!
//! `frame` is the zero-based frame index, `x`/`y` the top-left corner in pixels, `w`/`h`
//! the box size, `class` an integer class label, `conf` the detector confidence in
//! `[0, 1]` and `id` an optional track ID. Unknown keys are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Detection, GrayImage};
use crate::scalar::Scalar;

/// `frame_000042.pgm`
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(frame_file_name(index))
}

pub fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(img.pixels().len() + 32);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.pixels(), img.width() as u32, img.height() as u32, ExtendedColorType::L8)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if !bytes.starts_with(b"P5") {
        return Err("not a binary graymap (expected magic P5)".into());
    }
    let decoder = PnmDecoder::new(bytes).map_err(|e| e.to_string())?;
    let img = DynamicImage::from_decoder(decoder).map_err(|e| e.to_string())?;
    let DynamicImage::ImageLuma8(buf) = img else {
        return Err("maxval must be 255".into());
    };
    let (w, h) = buf.dimensions();
    GrayImage::new(w as usize, h as usize, buf.into_raw()).map_err(|e| e.to_string())
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes = encode_pgm(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Pgm {
        path: path.to_path_buf(),
        message,
    })
}

/// One line of a detection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class: u32,
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
}

impl DetectionRecord {
    pub fn from_detection<T: Scalar>(det: &Detection<T>) -> Self {
        let f = |v: T| v.to_f64_lossy();
        Self {
            frame: det.frame_index,
            x: f(det.bbox.x),
            y: f(det.bbox.y),
            w: f(det.bbox.w),
            h: f(det.bbox.h),
            class: det.class_id,
            conf: f(det.confidence),
            id: det.track_id,
        }
    }

    /// Validates the record and clamps its box to the frame.
    pub fn to_detection<T: Scalar>(&self, frame_width: usize, frame_height: usize) -> Result<Detection<T>> {
        let bbox = BoundingBox::new(T::lit(self.x), T::lit(self.y), T::lit(self.w), T::lit(self.h))?
            .clamp_to_frame(frame_width, frame_height)?;
        let mut det = Detection::new(self.frame, bbox, self.class, T::lit(self.conf))?;
        det.track_id = self.id;
        Ok(det)
    }
}

pub fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec = serde_json::from_str(trimmed).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn to_jsonl<'a, R: Serialize + 'a>(records: impl IntoIterator<Item = &'a R>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<'a, R: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a R>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Groups records into per-frame lists, `frame_count` frames long.
pub fn group_by_frame<T: Scalar>(
    records: &[DetectionRecord],
    frame_count: usize,
    frame_width: usize,
    frame_height: usize,
) -> Result<Vec<Vec<Detection<T>>>> {
    let mut frames = vec![Vec::new(); frame_count];
    for rec in records {
        if rec.frame >= frame_count {
            return Err(Error::Misaligned(format!(
                "detection at frame {} but the stream has {frame_count} frames",
                rec.frame
            )));
        }
        frames[rec.frame].push(rec.to_detection(frame_width, frame_height)?);
    }
    Ok(frames)
}
