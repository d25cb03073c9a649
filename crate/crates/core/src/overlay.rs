//! Error overlays: ground truth vs. automatic segmentation drawn over a
//! grayscale slice, with an optional magnified inset in the upper-left corner.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, BinaryMask, IntensityMap, Raster};

pub type Rgb = [u8; 3];

pub const RED: Rgb = [255, 0, 0];
pub const GREEN: Rgb = [0, 255, 0];
pub const BLUE: Rgb = [0, 0, 255];
pub const WHITE: Rgb = [255, 255, 255];

pub const DEFAULT_ZOOM_FACTOR: usize = 4;

/// Row-major RGB image, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("rgb image", format!("zero-sized {width}x{height}")));
        }
        if width.checked_mul(height).and_then(|n| n.checked_mul(3)) != Some(data.len()) {
            return Err(Error::invalid(
                "rgb image",
                format!("{} bytes for a {width}x{height} image", data.len()),
            ));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Rgb]) -> Result<Self> {
        Self::new(width, height, pixels.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn count_color(&self, color: Rgb) -> usize {
        self.pixels().filter(|&p| p == color).count()
    }
}

/// Min-max scales intensities to 0..=255. A constant slice maps to 0.
pub fn to_gray(background: &IntensityMap) -> Vec<u8> {
    let px = background.pixels();
    let (lo, hi) = px
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = f64::from(hi) - f64::from(lo);
    if range <= 0.0 {
        return vec![0; px.len()];
    }
    px.iter()
        .map(|&v| ((f64::from(v) - f64::from(lo)) / range * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Green marks overlap, red ground-truth-only (false negatives), blue
/// segmentation-only (false positives); everything else is the grayscale
/// background.
pub fn render_overlay(background: &IntensityMap, gs: &BinaryMask, seg: &BinaryMask) -> Result<RgbImage> {
    ensure_same_shape(background.shape(), gs.shape())?;
    ensure_same_shape(gs.shape(), seg.shape())?;
    let gray = to_gray(background);
    let mut data = Vec::with_capacity(gray.len() * 3);
    for ((&g, &truth), &pred) in gray.iter().zip(gs.pixels()).zip(seg.pixels()) {
        let c = match (truth, pred) {
            (1, 1) => GREEN,
            (1, 0) => RED,
            (0, 1) => BLUE,
            _ => [g, g, g],
        };
        data.extend_from_slice(&c);
    }
    RgbImage::new(gs.width(), gs.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let nums: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
        match nums.as_deref() {
            Some(&[x, y, w, h]) => Ok(Rect { x, y, w, h }),
            _ => Err(Error::invalid("rect", format!("{s:?} (expected x,y,w,h)"))),
        }
    }
}

/// Copies `rect`, magnifies it `factor` times by pixel replication and pastes
/// it at the origin. A 1-pixel white border is drawn along the right and
/// bottom edges of the pasted inset where it falls inside the image.
pub fn zoom_inset(img: &RgbImage, rect: Rect, factor: usize) -> Result<RgbImage> {
    if factor == 0 {
        return Err(Error::invalid("zoom factor", "must be positive"));
    }
    let in_bounds = rect.w > 0
        && rect.h > 0
        && rect.x.checked_add(rect.w).is_some_and(|r| r <= img.width)
        && rect.y.checked_add(rect.h).is_some_and(|b| b <= img.height);
    if !in_bounds {
        return Err(Error::invalid(
            "zoom inset",
            format!(
                "zoom rect out of bounds ({},{},{},{} in {}x{})",
                rect.x, rect.y, rect.w, rect.h, img.width, img.height
            ),
        ));
    }
    let (iw, ih) = (rect.w * factor, rect.h * factor);
    if iw > img.width || ih > img.height {
        return Err(Error::invalid(
            "zoom inset",
            format!("{iw}x{ih} inset larger than {}x{} image", img.width, img.height),
        ));
    }

    let mut out = img.clone();
    for y in 0..ih {
        for x in 0..iw {
            out.set(x, y, img.pixel(rect.x + x / factor, rect.y + y / factor));
        }
    }
    if iw < img.width {
        for y in 0..(ih + 1).min(img.height) {
            out.set(iw, y, WHITE);
        }
    }
    if ih < img.height {
        for x in 0..(iw + 1).min(img.width) {
            out.set(x, ih, WHITE);
        }
    }
    Ok(out)
}
