//! In-memory images and binary masks.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Declared numeric range of a [`PixelGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RangeTag {
    /// Values in `[0, 1]`. The working range for stored corpora.
    Unit,
    /// Values in `[-1, 1]`. The range at generator outputs / discriminator inputs.
    Signed,
}

impl RangeTag {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::Signed => (-1.0, 1.0),
        }
    }
}

/// An H×W×C image with values in a declared range.
///
/// Channels are 1 (grayscale) or 3 (RGB). All pipeline operations keep
/// values inside the declared range; constructors enforce it.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    data: Array3<f32>,
    range: RangeTag,
}

impl PixelGrid {
    /// Wrap an `(h, w, c)` array, checking dimensions and range.
    pub fn new(data: Array3<f32>, range: RangeTag) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::Precondition(format!("image dimensions must be positive, got {h}x{w}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::Precondition(format!("channels must be 1 or 3, got {c}")));
        }
        let (lo, hi) = range.bounds();
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < lo || **v > hi) {
            return Err(Error::Precondition(format!(
                "pixel value {v} outside declared range [{lo}, {hi}]"
            )));
        }
        Ok(Self { data, range })
    }

    /// Build a single-channel image from a function of (row, col).
    pub fn from_fn(h: usize, w: usize, range: RangeTag, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        Self::new(Array3::from_shape_fn((h, w, 1), |(y, x, _)| f(y, x)), range)
    }

    /// Constant single-channel image.
    pub fn constant(h: usize, w: usize, value: f32, range: RangeTag) -> Result<Self> {
        Self::new(Array3::from_elem((h, w, 1), value), range)
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn range(&self) -> RangeTag {
        self.range
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    /// Value at (row, col, channel).
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y, x, c)]
    }

    /// Single-channel accessor; panics if the image has 3 channels.
    pub fn luma(&self, y: usize, x: usize) -> f32 {
        assert_eq!(self.channels(), 1, "luma() requires a single-channel image");
        self.data[(y, x, 0)]
    }

    /// Apply a per-value map, declaring the output range.
    ///
    /// The caller asserts the map lands inside `range`; the constructor
    /// re-checks.
    pub fn map_values(&self, range: RangeTag, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.data.mapv(|v| f(v)), range)
    }

    /// Reinterpret `[0,1]` values as `[-1,1]` via `2v - 1`.
    pub fn unit_to_signed(&self) -> Result<Self> {
        debug_assert_eq!(self.range, RangeTag::Unit);
        self.map_values(RangeTag::Signed, |v| (2.0 * v - 1.0).clamp(-1.0, 1.0))
    }

    /// Reinterpret `[-1,1]` values as `[0,1]` via `(v + 1) / 2`.
    pub fn signed_to_unit(&self) -> Result<Self> {
        debug_assert_eq!(self.range, RangeTag::Signed);
        self.map_values(RangeTag::Unit, |v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
    }
}

/// Binary region mask, same height/width as the image it annotates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRegion {
    data: Array2<bool>,
}

impl MaskRegion {
    pub fn new(data: Array2<bool>) -> Self {
        Self { data }
    }

    /// Mask covering the whole image.
    pub fn full(h: usize, w: usize) -> Self {
        Self { data: Array2::from_elem((h, w), true) }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self { data: Array2::from_shape_fn((h, w), |(y, x)| f(y, x)) }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.data[(y, x)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    /// Check the mask matches an image's spatial dimensions.
    pub fn check_fits(&self, img: &PixelGrid) -> Result<()> {
        if self.height() != img.height() || self.width() != img.width() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", img.height(), img.width()),
                got: format!("{}x{}", self.height(), self.width()),
            });
        }
        Ok(())
    }
}
