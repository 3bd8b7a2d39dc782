//! Discrepancy behavior under data scaling with zero background.
//!
//! With `b = 0` the EM map is positively homogeneous, so
//! `d_KL(k, L·y) = L·d_KL(k, y)`. For data outside the cone `H·R₊` the
//! discrepancy has a positive floor, and scaling the data far enough pushes
//! that floor above `M/2`: the discrepancy principle can then never be met.

use super::{rescale_to_flux, synthetic_phantom};
use crate::em::{run_trajectory, EmProblem};
use crate::image::{Dims, Image};
use crate::operators::{convolution_operator, gaussian_psf, ForwardOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma5Config {
    pub dims: Dims,
    pub psf_sigma: f64,
    /// Total counts of the base object.
    pub flux: f64,
    pub k_max: usize,
    /// Data multipliers `L`.
    pub scales: Vec<f64>,
    /// Relative amplitude of the checkerboard modulation that moves the data
    /// off the cone; `0` keeps the noiseless, feasible data `H x*`.
    pub modulation: f64,
}

impl Default for Lemma5Config {
    fn default() -> Self {
        Lemma5Config {
            dims: Dims::new(32, 32),
            psf_sigma: 2.0,
            flux: 1e4,
            k_max: 500,
            scales: vec![1.0, 10.0, 100.0, 1000.0],
            modulation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma5Row {
    pub scale: f64,
    /// `min_k d_KL(k, L·y)` over the run.
    pub min_d_kl: f64,
    /// First `k` with `d_KL(k, L·y) < M/2`.
    pub crossing: Option<usize>,
    /// `max_k |d_KL(k, L·y) − L·d_KL(k, y)| / (L·d_KL(k, y))`.
    pub scaling_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma5Report {
    pub m: usize,
    /// `min_k d_KL(k, y)` for the unscaled data.
    pub base_min_d_kl: f64,
    /// `M / (2 · base_min_d_kl)`: scales beyond this cannot cross `M/2`
    /// within the budget.
    pub critical_scale: f64,
    pub rows: Vec<Lemma5Row>,
}

impl Lemma5Report {
    pub fn max_scaling_error(&self) -> f64 {
        self.rows.iter().map(|r| r.scaling_error).fold(0.0, f64::max)
    }
}

fn discrepancy_curve(problem: &EmProblem<'_>, k_max: usize) -> Result<Vec<f64>> {
    let y = problem.data().to_vec();
    let mut out = Vec::with_capacity(k_max);
    let mut failure = None;
    run_trajectory(problem, k_max, |s| match s.discrepancy(&y) {
        Ok(d) => out.push(d),
        Err(e) => {
            failure.get_or_insert(e);
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn lemma5_demo(config: &Lemma5Config) -> Result<Lemma5Report> {
    if config.k_max == 0 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    if !(config.modulation >= 0.0 && config.modulation < 1.0) {
        return Err(Error::Config(format!(
            "modulation must be in [0, 1), got {}",
            config.modulation
        )));
    }
    if let Some(l) = config.scales.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!("scales must be > 0, got {l}")));
    }
    let dims = config.dims;
    let x_true = rescale_to_flux(&synthetic_phantom(dims)?, config.flux)?;
    let op = convolution_operator(&gaussian_psf(dims, config.psf_sigma)?, dims)?;
    let hx = op.apply(&x_true)?;
    let data: Vec<f64> = hx
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let sign = if (i % dims.width + i / dims.width).is_multiple_of(2) { 1.0 } else { -1.0 };
            v.max(0.0) * (1.0 + sign * config.modulation)
        })
        .collect();
    let y = Image::new(dims, data)?;
    let zero = Image::zeros(dims);
    let problem = EmProblem::new_relaxed(&op, &y, &zero)?;
    let base = discrepancy_curve(&problem, config.k_max)?;
    let m = dims.len();
    let half = m as f64 / 2.0;
    let base_min = base.iter().copied().fold(f64::INFINITY, f64::min);

    let rows = config
        .scales
        .iter()
        .map(|&scale| {
            let curve = discrepancy_curve(&problem.with_scaled_data(scale), config.k_max)?;
            let scaling_error = curve
                .iter()
                .zip(&base)
                .map(|(d, b)| {
                    let expected = scale * b;
                    if expected == 0.0 {
                        d.abs()
                    } else {
                        (d - expected).abs() / expected
                    }
                })
                .fold(0.0, f64::max);
            Ok(Lemma5Row {
                scale,
                min_d_kl: curve.iter().copied().fold(f64::INFINITY, f64::min),
                crossing: curve.iter().position(|&d| d < half).map(|i| i + 1),
                scaling_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Lemma5Report {
        m,
        base_min_d_kl: base_min,
        critical_scale: half / base_min,
        rows,
    })
}
