use crate::image::{Dims, Image};
use crate::kl::neumaier_sum;
use crate::random::{sample_poisson_image, RngStream};
use crate::{Error, Result};

/// Nonnegative point spread function with unit sum.
///
/// The declared center is the pixel that maps onto itself under convolution:
/// a PSF whose only nonzero value sits at the center is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    image: Image,
    center: (usize, usize),
}

impl Psf {
    /// Wraps an image that already sums to one (within `1e-12`). The center
    /// is `(⌊W/2⌋, ⌊H/2⌋)`.
    pub fn new(image: Image) -> Result<Self> {
        image.check_nonnegative()?;
        let sum = image.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("PSF must sum to 1, sums to {sum}")));
        }
        let center = default_center(image.dims());
        Ok(Psf { image, center })
    }

    /// Divides a nonnegative image by its sum.
    pub fn normalized(image: Image) -> Result<Self> {
        image.check_nonnegative()?;
        let sum = image.sum();
        if !(sum > 0.0) {
            return Err(Error::domain("PSF is identically zero"));
        }
        let center = default_center(image.dims());
        Ok(Psf {
            image: image.scaled(1.0 / sum),
            center,
        })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn dims(&self) -> Dims {
        self.image.dims()
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    pub fn center_value(&self) -> f64 {
        self.image.get(self.center.0, self.center.1)
    }
}

fn default_center(dims: Dims) -> (usize, usize) {
    (dims.width / 2, dims.height / 2)
}

/// Isotropic Gaussian sampled at pixel centers, normalized to unit sum.
pub fn gaussian_psf(dims: Dims, sigma: f64) -> Result<Psf> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("PSF sigma must be > 0, got {sigma}")));
    }
    if dims.is_empty() {
        return Err(Error::domain("PSF must have at least one pixel"));
    }
    let (cx, cy) = default_center(dims);
    let two_var = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        let dy = y as f64 - cy as f64;
        for x in 0..dims.width {
            let dx = x as f64 - cx as f64;
            values.push((-(dx * dx + dy * dy) / two_var).exp());
        }
    }
    let sum = neumaier_sum(values.iter().copied());
    values.iter_mut().for_each(|v| *v /= sum);
    Psf::new(Image::new(dims, values)?)
}

/// An irregular PSF: Poisson counts drawn from `scale × base`, renormalized.
///
/// An all-zero draw is discarded and redrawn.
pub fn count_noise_psf(base: &Psf, scale: f64, rng: &mut RngStream) -> Result<Psf> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!("PSF noise scale must be > 0, got {scale}")));
    }
    let mean = base.image.scaled(scale);
    loop {
        let counts = sample_poisson_image(&mean, rng)?;
        if counts.sum() > 0.0 {
            let mut psf = Psf::normalized(counts)?;
            psf.center = base.center;
            return Ok(psf);
        }
    }
}
