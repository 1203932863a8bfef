//! Frame IO and low-level image math shared by the motion engine and the
//! clip sampler: luma conversion, area/bilinear resampling, letterboxing,
//! RGB<->HSV, and a frame-directory reader.
//!
//! Videos are consumed as directories of JPEG frames named
//! `frame_000000.jpg`, `frame_000001.jpg`, ... — the decode-side contract of
//! the corpus generator and the recommended ingest format for real footage
//! (one frame per sampled timestamp).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::RgbImage;
use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};

/// BT.601 luma in `[0, 255]`.
pub fn luma_f32(img: &RgbImage) -> Array2<f32> {
    let (w, h) = img.dimensions();
    let mut out = Array2::zeros((h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        let [r, g, b] = p.0;
        out[[y as usize, x as usize]] =
            0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
    }
    out
}

/// `[3, H, W]` float planes in `[0, 1]`.
pub fn rgb_to_planes(img: &RgbImage) -> Array3<f32> {
    let (w, h) = img.dimensions();
    let mut out = Array3::zeros((3, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = p.0[c] as f32 / 255.0;
        }
    }
    out
}

/// Inverse of [`rgb_to_planes`] (values clamped to `[0, 1]`).
pub fn planes_to_rgb(planes: &Array3<f32>) -> RgbImage {
    let (c, h, w) = planes.dim();
    assert_eq!(c, 3, "expected 3 channel planes");
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = image::Rgb(std::array::from_fn(|ch| {
                (planes[[ch, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8
            }));
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img
}

/// How [`resize_plane`] interpolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// Box filter over the source footprint; the right choice when shrinking.
    Area,
    /// Bilinear interpolation at pixel centers; the right choice when enlarging.
    Bilinear,
}

/// Resample a single plane to `(out_h, out_w)`.
pub fn resize_plane(src: ArrayView2<'_, f32>, out_h: usize, out_w: usize, mode: Resample) -> Array2<f32> {
    let (in_h, in_w) = src.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0, "empty resize");
    if in_h == out_h && in_w == out_w {
        return src.to_owned();
    }
    match mode {
        Resample::Area => resize_area(src, out_h, out_w),
        Resample::Bilinear => resize_bilinear(src, out_h, out_w),
    }
}

fn resize_area(src: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (in_h, in_w) = src.dim();
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    let mut out = Array2::zeros((out_h, out_w));
    for oy in 0..out_h {
        let y_lo = oy as f64 * sy;
        let y_hi = (oy + 1) as f64 * sy;
        for ox in 0..out_w {
            let x_lo = ox as f64 * sx;
            let x_hi = (ox + 1) as f64 * sx;
            let mut acc = 0.0f64;
            let mut weight = 0.0f64;
            let y_start = y_lo.floor() as usize;
            let y_end = (y_hi.ceil() as usize).min(in_h);
            let x_start = x_lo.floor() as usize;
            let x_end = (x_hi.ceil() as usize).min(in_w);
            for y in y_start..y_end {
                let wy = overlap(y as f64, (y + 1) as f64, y_lo, y_hi);
                if wy <= 0.0 {
                    continue;
                }
                for x in x_start..x_end {
                    let wx = overlap(x as f64, (x + 1) as f64, x_lo, x_hi);
                    if wx <= 0.0 {
                        continue;
                    }
                    acc += src[[y, x]] as f64 * wy * wx;
                    weight += wy * wx;
                }
            }
            out[[oy, ox]] = if weight > 0.0 { (acc / weight) as f32 } else { 0.0 };
        }
    }
    out
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn resize_bilinear(src: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (in_h, in_w) = src.dim();
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    let mut out = Array2::zeros((out_h, out_w));
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = (fy - y0 as f64) as f32;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = (fx - x0 as f64) as f32;
            let top = src[[y0, x0]] * (1.0 - tx) + src[[y0, x1]] * tx;
            let bot = src[[y1, x0]] * (1.0 - tx) + src[[y1, x1]] * tx;
            out[[oy, ox]] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Geometry of an aspect-preserving fit of a `src_w x src_h` region into an
/// `out x out` square with centered zero padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterboxPlan {
    pub scale: f32,
    pub dst_w: usize,
    pub dst_h: usize,
    pub off_x: usize,
    pub off_y: usize,
    pub out: usize,
}

impl LetterboxPlan {
    pub fn new(src_w: usize, src_h: usize, out: usize) -> Self {
        assert!(src_w > 0 && src_h > 0 && out > 0, "degenerate letterbox");
        let scale = out as f32 / src_w.max(src_h) as f32;
        let dst_w = ((src_w as f32 * scale).round() as usize).clamp(1, out);
        let dst_h = ((src_h as f32 * scale).round() as usize).clamp(1, out);
        LetterboxPlan {
            scale,
            dst_w,
            dst_h,
            off_x: (out - dst_w) / 2,
            off_y: (out - dst_h) / 2,
            out,
        }
    }

    /// Map a source-region coordinate into the padded square.
    pub fn map_x(&self, x: f32) -> f32 {
        x * self.scale + self.off_x as f32
    }

    pub fn map_y(&self, y: f32) -> f32 {
        y * self.scale + self.off_y as f32
    }

    fn mode(&self) -> Resample {
        if self.scale < 1.0 {
            Resample::Area
        } else {
            Resample::Bilinear
        }
    }

    /// Resample one plane into the padded square (padding stays zero/black).
    pub fn apply_plane(&self, src: ArrayView2<'_, f32>) -> Array2<f32> {
        let resized = resize_plane(src, self.dst_h, self.dst_w, self.mode());
        let mut out = Array2::zeros((self.out, self.out));
        out.slice_mut(ndarray::s![
            self.off_y..self.off_y + self.dst_h,
            self.off_x..self.off_x + self.dst_w
        ])
        .assign(&resized);
        out
    }
}

/// Canonical frame filename within a video directory.
pub fn frame_filename(index: u32) -> String {
    format!("frame_{index:06}.jpg")
}

/// Random-access source of RGB frames for one video.
pub trait FrameSource {
    fn len(&self) -> u32;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn frame(&self, index: u32) -> Result<RgbImage>;
}

/// Directory of `frame_NNNNNN.jpg` files.
#[derive(Debug)]
pub struct FrameDir {
    dir: PathBuf,
    count: u32,
}

impl FrameDir {
    /// Open a frame directory, verifying a contiguous `0..n` numbering.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut indices = Vec::new();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(idx) = name
                .strip_prefix("frame_")
                .and_then(|s| s.strip_suffix(".jpg"))
                .and_then(|s| s.parse::<u32>().ok())
            {
                indices.push(idx);
            }
        }
        if indices.is_empty() {
            return Err(Error::Decode(format!(
                "{}: no frame_NNNNNN.jpg files found",
                dir.display()
            )));
        }
        indices.sort_unstable();
        let count = indices.len() as u32;
        if indices[0] != 0 || *indices.last().unwrap() != count - 1 {
            return Err(Error::Decode(format!(
                "{}: frame numbering is not contiguous from 0",
                dir.display()
            )));
        }
        Ok(FrameDir { dir, count })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

impl FrameSource for FrameDir {
    fn len(&self) -> u32 {
        self.count
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        if index >= self.count {
            return Err(Error::InvalidInput(format!(
                "frame index {index} out of range 0..{}",
                self.count
            )));
        }
        let path = self.dir.join(frame_filename(index));
        let img = image::open(&path).map_err(|e| Error::image(&path, e))?;
        Ok(img.to_rgb8())
    }
}

/// In-memory frame list (synthesis output, tests).
pub struct MemFrames(pub Vec<RgbImage>);

impl FrameSource for MemFrames {
    fn len(&self) -> u32 {
        self.0.len() as u32
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        self.0
            .get(index as usize)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("frame index {index} out of range")))
    }
}

/// Encode a frame as baseline JPEG. The encoder is pure Rust with no
/// threading or platform dispatch, so output bytes depend only on the pixels
/// and the quality setting.
pub fn write_jpeg(path: &Path, img: &RgbImage, quality: u8) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = JpegEncoder::new_with_quality(BufWriter::new(file), quality);
    enc.encode_image(img).map_err(|e| Error::image(path, e))?;
    Ok(())
}

/// RGB (each in `[0,1]`) to HSV with hue in turns `[0,1)`.
pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

/// Inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn area_downscale_averages_blocks() {
        let src = array![
            [0.0f32, 2.0, 4.0, 6.0],
            [2.0, 4.0, 6.0, 8.0],
            [4.0, 6.0, 8.0, 10.0],
            [6.0, 8.0, 10.0, 12.0],
        ];
        let out = resize_plane(src.view(), 2, 2, Resample::Area);
        // Each output cell is the mean of a 2x2 block.
        assert_eq!(out, array![[2.0f32, 6.0], [6.0, 10.0]]);
    }

    #[test]
    fn bilinear_upscale_is_identity_on_constant() {
        let src = Array2::from_elem((3, 5), 7.5f32);
        let out = resize_plane(src.view(), 9, 15, Resample::Bilinear);
        assert!(out.iter().all(|&v| (v - 7.5).abs() < 1e-6));
    }

    #[test]
    fn letterbox_centers_and_preserves_aspect() {
        // 100x50 -> 112 square: scale 1.12, dst 112x56, y offset 28.
        let plan = LetterboxPlan::new(100, 50, 112);
        assert_eq!(plan.dst_w, 112);
        assert_eq!(plan.dst_h, 56);
        assert_eq!(plan.off_x, 0);
        assert_eq!(plan.off_y, 28);
        let src = Array2::from_elem((50, 100), 1.0f32);
        let out = plan.apply_plane(src.view());
        assert_eq!(out[[0, 0]], 0.0); // padding stays black
        assert_eq!(out[[60, 60]], 1.0);
        // Interior of the content region is exactly preserved aspect: rows
        // 28..84 hold content, everything else is padding.
        assert!(out.slice(ndarray::s![..28, ..]).iter().all(|&v| v == 0.0));
        assert!(out.slice(ndarray::s![84.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2f32, 0.7, 0.4), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (0.9, 0.1, 0.5)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-5 && (g - g2).abs() < 1e-5 && (b - b2).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn area_resize_preserves_mean(h in 1usize..12, w in 1usize..12, oh in 1usize..6, ow in 1usize..6) {
            // Box filtering a constant image must reproduce the constant.
            let src = Array2::from_elem((h.max(oh), w.max(ow)), 3.25f32);
            let out = resize_plane(src.view(), oh, ow, Resample::Area);
            prop_assert!(out.iter().all(|&v| (v - 3.25).abs() < 1e-5));
        }
    }
}
