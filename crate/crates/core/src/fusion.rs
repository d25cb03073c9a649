//! Ensemble post-processing of per-model score maps.
//!
//! Two pipelines combine N score maps into one mask:
//!
//! * **MSM** (mean score maps): average the scores, then threshold.
//! * **MBM** (mean binary masks): threshold each map, average the resulting
//!   masks, then threshold again. For odd N at threshold 0.5 this is a
//!   per-pixel majority vote.
//!
//! Thresholding is strict everywhere: a pixel becomes foreground only when its
//! value is `> threshold`; a value equal to the threshold maps to 0. For even N
//! under MBM this means ties are rejected.
//!
//! Means are accumulated in `f64` over values sorted per pixel, so the result
//! does not depend on input order or storage precision.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{
    cast_mask_to_scores, ensure_same_shape, BinaryMask, Raster, ScoreMap, Volume,
};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Binarization threshold, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Threshold(value))
        } else {
            Err(Error::invalid(
                "threshold",
                format!("{value} is not strictly between 0 and 1"),
            ))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn accepts(self, value: f64) -> bool {
        value > self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_THRESHOLD)
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid("threshold", format!("{s:?} is not a number")))?;
        Threshold::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMethod {
    /// Average the score maps, then binarize.
    Msm,
    /// Binarize each score map, average the masks, then binarize again.
    Mbm,
}

impl FusionMethod {
    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::Msm => "msm",
            FusionMethod::Mbm => "mbm",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msm" => Ok(FusionMethod::Msm),
            "mbm" => Ok(FusionMethod::Mbm),
            other => Err(Error::invalid(
                "fusion method",
                format!("{other:?} (expected msm or mbm)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub threshold: Threshold,
    pub method: FusionMethod,
}

impl FusionConfig {
    pub fn new(method: FusionMethod, threshold: Threshold) -> Self {
        FusionConfig { threshold, method }
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            threshold: Threshold::default(),
            method: FusionMethod::Mbm,
        }
    }
}

pub fn binarize(map: &ScoreMap, threshold: Threshold) -> BinaryMask {
    let data = map
        .pixels()
        .iter()
        .map(|&v| threshold.accepts(f64::from(v)) as u8)
        .collect();
    BinaryMask::from_labels_unchecked(map.width(), map.height(), data)
}

fn check_stack(maps: &[ScoreMap]) -> Result<()> {
    let first = maps.first().ok_or(Error::Empty("no score maps to fuse"))?;
    for m in &maps[1..] {
        ensure_same_shape(first.shape(), m.shape())?;
    }
    Ok(())
}

/// Pixelwise means in double precision. Values at each pixel are summed in
/// ascending order so any permutation of `maps` gives bit-identical output.
fn pixel_means(maps: &[ScoreMap]) -> Result<Vec<f64>> {
    check_stack(maps)?;
    let n = maps.len();
    let len = maps[0].pixels().len();
    let mut column = vec![0f32; n];
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        for (slot, m) in column.iter_mut().zip(maps) {
            *slot = m.pixels()[i];
        }
        column.sort_unstable_by(f32::total_cmp);
        let sum: f64 = column.iter().map(|&v| f64::from(v)).sum();
        out.push(sum / n as f64);
    }
    Ok(out)
}

/// Pixelwise arithmetic mean of a non-empty stack of same-shape maps.
pub fn mean_maps(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let means = pixel_means(maps)?;
    ScoreMap::new(
        maps[0].width(),
        maps[0].height(),
        means.into_iter().map(|v| v as f32).collect(),
    )
}

fn threshold_means(width: usize, height: usize, means: &[f64], t: Threshold) -> BinaryMask {
    let data = means.iter().map(|&v| t.accepts(v) as u8).collect();
    BinaryMask::from_labels_unchecked(width, height, data)
}

pub fn fuse_msm(maps: &[ScoreMap], threshold: Threshold) -> Result<BinaryMask> {
    let means = pixel_means(maps)?;
    Ok(threshold_means(
        maps[0].width(),
        maps[0].height(),
        &means,
        threshold,
    ))
}

pub fn fuse_mbm(maps: &[ScoreMap], threshold: Threshold) -> Result<BinaryMask> {
    check_stack(maps)?;
    let votes: Vec<ScoreMap> = maps
        .iter()
        .map(|m| cast_mask_to_scores(&binarize(m, threshold)))
        .collect();
    let means = pixel_means(&votes)?;
    Ok(threshold_means(
        maps[0].width(),
        maps[0].height(),
        &means,
        threshold,
    ))
}

pub fn fuse(maps: &[ScoreMap], config: FusionConfig) -> Result<BinaryMask> {
    match config.method {
        FusionMethod::Msm => fuse_msm(maps, config.threshold),
        FusionMethod::Mbm => fuse_mbm(maps, config.threshold),
    }
}

/// Applies [`fuse`] slice by slice across one subject's model volumes.
pub fn fuse_volumes(volumes: &[Volume<ScoreMap>], config: FusionConfig) -> Result<Volume<BinaryMask>> {
    let first = volumes.first().ok_or(Error::Empty("no score volumes to fuse"))?;
    for v in &volumes[1..] {
        ensure_same_shape(first.shape(), v.shape())?;
    }
    let mut fused = Vec::with_capacity(first.depth());
    let mut stack = Vec::with_capacity(volumes.len());
    for k in 0..first.depth() {
        stack.clear();
        stack.extend(volumes.iter().map(|v| v.slices()[k].clone()));
        fused.push(fuse(&stack, config)?);
    }
    Volume::new(fused)
}
