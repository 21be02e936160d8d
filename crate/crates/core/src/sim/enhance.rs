//! Global histogram equalization, the whole-image enhancement baseline.

use crate::model::GrayImage;

/// Maps each level through the normalized cumulative histogram, so the occupied levels
/// spread over `[0, 255]`. Uniform images come back unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let mut hist = [0usize; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let n = img.pixels().len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n == cdf_min {
        return img.clone();
    }
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        let scaled = (cdf[v].saturating_sub(cdf_min)) as f64 * 255.0 / (n - cdf_min) as f64;
        *out = scaled.round() as u8;
    }
    let mut out = img.clone();
    for p in out.pixels_mut() {
        *p = lut[*p as usize];
    }
    out
}
