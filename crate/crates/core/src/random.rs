//! Seeded random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 generator keyed by `seed` with its 64-bit stream
//! selector set to `stream_id`. Equal `(seed, stream_id)` pairs give identical
//! output on every platform; distinct stream ids give non-overlapping
//! keystreams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::image::Image;
use crate::{Error, Result};

/// Means below this use sequential-search inversion, above it PTRS.
const INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream with the same seed and a different id.
    pub fn sibling(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws one Poisson variate with the given mean.
///
/// Exact for every mean: inversion by sequential search below 30, Hörmann's
/// transformed rejection with squeeze (PTRS) above.
pub fn sample_poisson(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::domain(format!(
            "Poisson mean must be finite and >= 0, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    Ok(if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    })
}

fn poisson_inversion(mean: f64, rng: &mut RngStream) -> u64 {
    let u = rng.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        // Rounding can leave the accumulated cdf just short of u deep in the
        // tail; stop once the pmf no longer moves it.
        if next == cdf && k as f64 > mean {
            break;
        }
        cdf = next;
    }
    k
}

fn poisson_ptrs(mean: f64, rng: &mut RngStream) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);

    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Independent per-pixel Poisson draws with the given mean image.
pub fn sample_poisson_image(mean: &Image, rng: &mut RngStream) -> Result<Image> {
    let counts = mean
        .values()
        .iter()
        .map(|&m| sample_poisson(m, rng).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    Image::new(mean.dims(), counts)
}

pub fn sample_standard_normal(n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("sample length must be >= 1"));
    }
    Ok((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// `n` independent ±1 signs with equal probability.
pub fn sample_rademacher(n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("sample length must be >= 1"));
    }
    Ok((0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect())
}
