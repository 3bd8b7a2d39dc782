//! Built-in synthetic object: smooth Gaussian sources and a compact bright
//! point-like source on a dark field.

use crate::image::{Dims, Image};
use crate::{Error, Result};

/// A Gaussian component in fractional grid coordinates.
struct Blob {
    cx: f64,
    cy: f64,
    /// Standard deviations as a fraction of the grid width.
    sx: f64,
    sy: f64,
    amplitude: f64,
}

const BLOBS: [Blob; 4] = [
    Blob {
        cx: 0.38,
        cy: 0.42,
        sx: 0.20,
        sy: 0.14,
        amplitude: 1.0,
    },
    Blob {
        cx: 0.62,
        cy: 0.60,
        sx: 0.14,
        sy: 0.22,
        amplitude: 0.7,
    },
    Blob {
        cx: 0.30,
        cy: 0.70,
        sx: 0.08,
        sy: 0.08,
        amplitude: 1.4,
    },
    // Point-like source.
    Blob {
        cx: 0.70,
        cy: 0.28,
        sx: 0.012,
        sy: 0.012,
        amplitude: 6.0,
    },
];

/// Values below this fraction of the peak are set to zero.
const DARK_CUTOFF: f64 = 1e-2;

/// The synthetic phantom on a `dims` grid, unnormalized.
pub fn synthetic_phantom(dims: Dims) -> Result<Image> {
    if dims.width < 8 || dims.height < 8 {
        return Err(Error::domain(format!(
            "synthetic phantom needs at least 8x8 pixels, got {dims}"
        )));
    }
    let w = dims.width as f64;
    let h = dims.height as f64;
    let mut values = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        for x in 0..dims.width {
            let v: f64 = BLOBS
                .iter()
                .map(|b| {
                    let dx = (x as f64 + 0.5 - b.cx * w) / (b.sx * w).max(0.5);
                    let dy = (y as f64 + 0.5 - b.cy * h) / (b.sy * w).max(0.5);
                    b.amplitude * (-0.5 * (dx * dx + dy * dy)).exp()
                })
                .sum();
            values.push(v);
        }
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    for v in &mut values {
        if *v < DARK_CUTOFF * peak {
            *v = 0.0;
        }
    }
    Image::new(dims, values)
}

/// Scales a nonnegative object so its pixels sum to `flux`.
pub fn rescale_to_flux(object: &Image, flux: f64) -> Result<Image> {
    object.check_nonnegative()?;
    let sum = object.sum();
    if !(sum > 0.0) {
        return Err(Error::domain("object is identically zero"));
    }
    Ok(object.scaled(flux / sum))
}
