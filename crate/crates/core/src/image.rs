//! Row-major images on a `width × height` pixel grid.
//!
//! The same type holds objects, data, backgrounds, PSFs and predictions. The
//! role-specific constructors enforce nonnegativity where the role needs it.

use crate::{Error, Result};

/// Grid dimensions, `width` columns by `height` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Dims { width, height }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat row-major index of column `x`, row `y`.
    #[inline]
    pub const fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    dims: Dims,
    values: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major values. All values must be finite.
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::domain("image must have at least one pixel"));
        }
        if values.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at pixel {i}")));
        }
        Ok(Image { dims, values })
    }

    /// Like [`Image::new`] but additionally requires every value to be `>= 0`.
    pub fn nonnegative(dims: Dims, values: Vec<f64>) -> Result<Self> {
        let img = Self::new(dims, values)?;
        img.check_nonnegative()?;
        Ok(img)
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        Self::new(dims, vec![value; dims.len()])
    }

    pub fn zeros(dims: Dims) -> Self {
        assert!(!dims.is_empty(), "image must have at least one pixel");
        Image {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.dims.index(x, y)]
    }

    pub fn sum(&self) -> f64 {
        crate::kl::neumaier_sum(self.values.iter().copied())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            dims: self.dims,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(i) => Err(Error::domain(format!(
                "negative value {} at pixel {i}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(i) => Err(Error::domain(format!(
                "non-positive value {} at pixel {i}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }

    /// True when every value is an integer in `[0, 65535]`.
    pub fn is_u16_counts(&self) -> bool {
        self.values
            .iter()
            .all(|&v| (0.0..=65535.0).contains(&v) && v.fract() == 0.0)
    }
}
