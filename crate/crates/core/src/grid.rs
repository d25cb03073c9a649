//! Row-major 2D grids (score maps, binary masks, intensity slices) and
//! slice stacks. Pixel `(x, y)` lives at index `y * width + x`.
//!
//! Every grid validates its contents on construction and is immutable
//! afterwards; operations build new grids.

use std::fmt;

use crate::error::{Error, Result};

/// Width, height and slice count of a grid or volume. 2D grids have depth 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
}

impl Shape {
    pub fn plane(width: usize, height: usize) -> Self {
        Shape {
            width,
            height,
            depth: 1,
        }
    }

    pub fn voxels(&self) -> usize {
        self.width * self.height * self.depth
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VolumeKind {
    Score,
    Mask,
    Intensity,
}

impl VolumeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VolumeKind::Score => "score",
            VolumeKind::Mask => "mask",
            VolumeKind::Intensity => "intensity",
        }
    }
}

/// A validated 2D grid with row-major storage.
pub trait Raster: Clone + Send + Sync + Sized {
    type Pixel: Copy + PartialEq + fmt::Debug + Send + Sync;
    const KIND: VolumeKind;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixels(&self) -> &[Self::Pixel];

    /// Builds a grid, enforcing the invariants of the concrete type.
    fn from_pixels(width: usize, height: usize, data: Vec<Self::Pixel>) -> Result<Self>;

    fn shape(&self) -> Shape {
        Shape::plane(self.width(), self.height())
    }

    fn get(&self, x: usize, y: usize) -> Self::Pixel {
        self.pixels()[y * self.width() + x]
    }
}

fn check_dims(what: &'static str, width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(what, format!("zero-sized grid {width}x{height}")));
    }
    match width.checked_mul(height) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::invalid(
            what,
            format!("{len} values for a {width}x{height} grid"),
        )),
    }
}

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims("score map", width, height, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(
                "score map",
                format!("value {v} at index {i} outside [0, 1]"),
            ));
        }
        Ok(ScoreMap {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }
}

impl Raster for ScoreMap {
    type Pixel = f32;
    const KIND: VolumeKind = VolumeKind::Score;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[f32] {
        &self.data
    }
    fn from_pixels(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// A `{0, 1}` segmentation decision.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims("binary mask", width, height, data.len())?;
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::invalid(
                "binary mask",
                format!("value {v} at index {i} not in {{0, 1}}"),
            ));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width.saturating_mul(height)])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, data)
    }

    // Callers guarantee every value is 0 or 1.
    pub(crate) fn from_labels_unchecked(width: usize, height: usize, data: Vec<u8>) -> Self {
        debug_assert!(data.len() == width * height && data.iter().all(|&v| v <= 1));
        BinaryMask {
            width,
            height,
            data,
        }
    }
}

impl Raster for BinaryMask {
    type Pixel = u8;
    const KIND: VolumeKind = VolumeKind::Mask;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[u8] {
        &self.data
    }
    fn from_pixels(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// Raw or normalized MR intensities; any finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl IntensityMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims("intensity map", width, height, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "intensity map",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(IntensityMap {
            width,
            height,
            data,
        })
    }
}

impl Raster for IntensityMap {
    type Pixel = f32;
    const KIND: VolumeKind = VolumeKind::Intensity;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[f32] {
        &self.data
    }
    fn from_pixels(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

/// An ordered, non-empty stack of equally sized slices for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T: Raster> {
    slices: Vec<T>,
}

impl<T: Raster> Volume<T> {
    pub fn new(slices: Vec<T>) -> Result<Self> {
        let first = slices.first().ok_or(Error::Empty("volume with no slices"))?;
        let plane = first.shape();
        if let Some(bad) = slices.iter().find(|s| s.shape() != plane) {
            return Err(Error::Dimension {
                left: plane,
                right: bad.shape(),
            });
        }
        Ok(Volume { slices })
    }

    pub fn single(slice: T) -> Self {
        Volume {
            slices: vec![slice],
        }
    }

    pub fn slices(&self) -> &[T] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<T> {
        self.slices
    }

    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    pub fn width(&self) -> usize {
        self.slices[0].width()
    }

    pub fn height(&self) -> usize {
        self.slices[0].height()
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width(),
            height: self.height(),
            depth: self.depth(),
        }
    }

    pub fn kind(&self) -> VolumeKind {
        T::KIND
    }

    pub fn map<U: Raster>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            slices: self.slices.iter().map(f).collect(),
        }
    }
}

/// Anything that can be viewed as a set of labelled pixels: a single mask or a
/// stack of them.
pub trait MaskSet {
    fn mask_shape(&self) -> Shape;
    fn label_slices(&self) -> impl Iterator<Item = &[u8]> + '_;
}

impl MaskSet for BinaryMask {
    fn mask_shape(&self) -> Shape {
        self.shape()
    }
    fn label_slices(&self) -> impl Iterator<Item = &[u8]> + '_ {
        std::iter::once(self.pixels())
    }
}

impl MaskSet for Volume<BinaryMask> {
    fn mask_shape(&self) -> Shape {
        self.shape()
    }
    fn label_slices(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.slices.iter().map(|s| s.pixels())
    }
}

pub(crate) fn ensure_same_shape(left: Shape, right: Shape) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::Dimension { left, right })
    }
}

/// Number of foreground pixels, summed over every slice.
pub fn count_foreground<M: MaskSet + ?Sized>(mask: &M) -> u64 {
    mask.label_slices()
        .map(|s| s.iter().map(|&v| u64::from(v)).sum::<u64>())
        .sum()
}

/// Number of positions labelled foreground in both `a` and `b`.
pub fn overlap_count<M: MaskSet + ?Sized>(a: &M, b: &M) -> Result<u64> {
    ensure_same_shape(a.mask_shape(), b.mask_shape())?;
    Ok(a.label_slices()
        .zip(b.label_slices())
        .map(|(sa, sb)| {
            sa.iter()
                .zip(sb)
                .map(|(&x, &y)| u64::from(x & y))
                .sum::<u64>()
        })
        .sum())
}

pub fn cast_mask_to_scores(mask: &BinaryMask) -> ScoreMap {
    ScoreMap {
        width: mask.width,
        height: mask.height,
        data: mask.data.iter().map(|&v| f32::from(v)).collect(),
    }
}
