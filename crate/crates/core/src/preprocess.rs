//! Slice preprocessing: centered crop/pad to a common size, z-score intensity
//! normalization, and affine augmentation (scale, shear, rotation).

use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, BinaryMask, IntensityMap, Raster, Volume};

/// Below this population standard deviation a slice is treated as constant.
pub const MIN_STD: f64 = 1e-12;

struct AxisPlan {
    src_start: usize,
    dst_start: usize,
    len: usize,
}

fn plan_axis(source: usize, target: usize) -> AxisPlan {
    if target >= source {
        AxisPlan {
            src_start: 0,
            dst_start: (target - source) / 2,
            len: source,
        }
    } else {
        AxisPlan {
            src_start: (source - target) / 2,
            dst_start: 0,
            len: target,
        }
    }
}

/// Centers `img` on a `target_w x target_h` canvas. Padding puts
/// `floor((target - source) / 2)` fill pixels before the source on each axis;
/// cropping removes `floor((source - target) / 2)` pixels from the leading side.
pub fn crop_pad_center<R: Raster>(img: &R, target_w: usize, target_h: usize, fill: R::Pixel) -> Result<R> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::invalid(
            "crop/pad target",
            format!("{target_w}x{target_h} has a zero dimension"),
        ));
    }
    let px = plan_axis(img.width(), target_w);
    let py = plan_axis(img.height(), target_h);
    let mut data = vec![fill; target_w * target_h];
    let src = img.pixels();
    for row in 0..py.len {
        let s = (py.src_start + row) * img.width() + px.src_start;
        let d = (py.dst_start + row) * target_w + px.dst_start;
        data[d..d + px.len].copy_from_slice(&src[s..s + px.len]);
    }
    R::from_pixels(target_w, target_h, data)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn apply_zscore(img: &IntensityMap, mean: f64, std: f64) -> IntensityMap {
    let data = if std < MIN_STD {
        vec![0.0; img.pixels().len()]
    } else {
        img.pixels()
            .iter()
            .map(|&v| ((f64::from(v) - mean) / std) as f32)
            .collect()
    };
    IntensityMap::new(img.width(), img.height(), data).expect("z-scores of finite values are finite")
}

/// `(x - mean) / std` with the population standard deviation of the slice.
/// Constant slices become all zeros.
pub fn zscore_normalize(img: &IntensityMap) -> IntensityMap {
    let (mean, std) = mean_std(img.pixels().iter().map(|&v| f64::from(v)));
    apply_zscore(img, mean, std)
}

/// Z-score with one mean and standard deviation pooled over every slice.
pub fn zscore_normalize_volume(volume: &Volume<IntensityMap>) -> Volume<IntensityMap> {
    let all = volume
        .slices()
        .iter()
        .flat_map(|s| s.pixels().iter().map(|&v| f64::from(v)));
    let (mean, std) = mean_std(all);
    volume.map(|s| apply_zscore(s, mean, std))
}

/// Affine augmentation parameters. The transform is applied about the image
/// center as scale, then shear, then rotation.
///
/// Coordinates have x to the right and y down, so a positive rotation turns
/// the image clockwise on screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    rotation_deg: f64,
    shear_x: f64,
    shear_y: f64,
    scale_x: f64,
    scale_y: f64,
}

impl AffineParams {
    pub fn new(rotation_deg: f64, shear_x: f64, shear_y: f64, scale_x: f64, scale_y: f64) -> Result<Self> {
        let all = [rotation_deg, shear_x, shear_y, scale_x, scale_y];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("affine params", "non-finite value"));
        }
        if scale_x <= 0.0 || scale_y <= 0.0 {
            return Err(Error::invalid(
                "affine params",
                format!("scale factors must be positive, got {scale_x}, {scale_y}"),
            ));
        }
        if (1.0 - shear_x * shear_y).abs() < 1e-12 {
            return Err(Error::invalid("affine params", "shear makes the transform singular"));
        }
        Ok(AffineParams {
            rotation_deg,
            shear_x,
            shear_y,
            scale_x,
            scale_y,
        })
    }

    pub fn identity() -> Self {
        AffineParams {
            rotation_deg: 0.0,
            shear_x: 0.0,
            shear_y: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
        }
    }

    pub fn rotation(degrees: f64) -> Result<Self> {
        Self::new(degrees, 0.0, 0.0, 1.0, 1.0)
    }

    pub fn scale(factor: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 0.0, factor, factor)
    }

    /// Forward matrix `R * Sh * S` as `[[a, b], [c, d]]`.
    fn forward(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        // Sh * S
        let m = [
            [self.scale_x, self.shear_x * self.scale_y],
            [self.shear_y * self.scale_x, self.scale_y],
        ];
        [
            [cos * m[0][0] - sin * m[1][0], cos * m[0][1] - sin * m[1][1]],
            [sin * m[0][0] + cos * m[1][0], sin * m[0][1] + cos * m[1][1]],
        ]
    }

    fn inverse(&self) -> [[f64; 2]; 2] {
        let [[a, b], [c, d]] = self.forward();
        let det = a * d - b * c;
        [[d / det, -b / det], [-c / det, a / det]]
    }
}

/// Maps each output pixel back to its source location.
struct InverseMap {
    m: [[f64; 2]; 2],
    cx: f64,
    cy: f64,
}

impl InverseMap {
    fn new(params: &AffineParams, width: usize, height: usize) -> Self {
        InverseMap {
            m: params.inverse(),
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let (dx, dy) = (x as f64 - self.cx, y as f64 - self.cy);
        (
            self.m[0][0] * dx + self.m[0][1] * dy + self.cx,
            self.m[1][0] * dx + self.m[1][1] * dy + self.cy,
        )
    }
}

fn sample_bilinear(px: &[f32], w: usize, h: usize, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    if x0 < -1.0 || y0 < -1.0 || x0 > w as f64 || y0 > h as f64 {
        return 0.0;
    }
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            f64::from(px[y as usize * w + x as usize])
        }
    };
    let mut acc = 0.0;
    for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
        for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let weight = wx * wy;
            if weight != 0.0 {
                acc += weight * at(x0 + ox, y0 + oy);
            }
        }
    }
    acc
}

fn sample_nearest(px: &[u8], w: usize, h: usize, sx: f64, sy: f64) -> u8 {
    let (x, y) = (sx.round(), sy.round());
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        0
    } else {
        px[y as usize * w + x as usize]
    }
}

/// Resamples the image under `params` with bilinear interpolation;
/// samples falling outside the source read as 0.
pub fn affine_augment(img: &IntensityMap, params: &AffineParams) -> IntensityMap {
    let (w, h) = (img.width(), img.height());
    let map = InverseMap::new(params, w, h);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            data.push(sample_bilinear(img.pixels(), w, h, sx, sy) as f32);
        }
    }
    IntensityMap::new(w, h, data).expect("interpolated finite values stay finite")
}

/// Transforms a label mask with nearest-neighbor sampling so it stays binary.
pub fn affine_augment_mask(label: &BinaryMask, params: &AffineParams) -> BinaryMask {
    let (w, h) = (label.width(), label.height());
    let map = InverseMap::new(params, w, h);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            data.push(sample_nearest(label.pixels(), w, h, sx, sy));
        }
    }
    BinaryMask::from_labels_unchecked(w, h, data)
}

/// Applies one transform to an image and its label together.
pub fn affine_augment_pair(
    img: &IntensityMap,
    label: &BinaryMask,
    params: &AffineParams,
) -> Result<(IntensityMap, BinaryMask)> {
    ensure_same_shape(img.shape(), label.shape())?;
    Ok((affine_augment(img, params), affine_augment_mask(label, params)))
}

/// A closed interval to draw a parameter from; written `v` or `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn fixed(v: f64) -> Self {
        ParamRange { lo: v, hi: v }
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

impl FromStr for ParamRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid("parameter range", format!("{s:?}")))
        };
        let range = match s.split_once(':') {
            Some((lo, hi)) => ParamRange {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            None => ParamRange::fixed(num(s)?),
        };
        if range.lo > range.hi {
            return Err(Error::invalid("parameter range", format!("{s:?} has lo > hi")));
        }
        Ok(range)
    }
}

/// Intervals for each augmentation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRanges {
    pub rotation_deg: ParamRange,
    pub shear_x: ParamRange,
    pub shear_y: ParamRange,
    pub scale_x: ParamRange,
    pub scale_y: ParamRange,
}

impl Default for AffineRanges {
    fn default() -> Self {
        AffineRanges {
            rotation_deg: ParamRange::fixed(0.0),
            shear_x: ParamRange::fixed(0.0),
            shear_y: ParamRange::fixed(0.0),
            scale_x: ParamRange::fixed(1.0),
            scale_y: ParamRange::fixed(1.0),
        }
    }
}

impl AffineRanges {
    pub fn is_identity(&self) -> bool {
        *self == AffineRanges::default()
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Result<AffineParams> {
        AffineParams::new(
            self.rotation_deg.sample(rng),
            self.shear_x.sample(rng),
            self.shear_y.sample(rng),
            self.scale_x.sample(rng),
            self.scale_y.sample(rng),
        )
    }
}
