//! Monte-Carlo checks of the two identities behind PAUKL.
//!
//! * Asymptotic Stein identity for Poisson vectors:
//!   `E[(Y_i − λ_i) f(Y)] = E[Y_i ∂_i f(Y)] + O(‖λ‖^{-1/2})`.
//! * `E[Σ_i Y_i log(Y_i/λ_i)] = M/2 + O(‖λ‖^{-1})`.
//!
//! Both estimators subtract control variates with known mean so the residual
//! gaps are resolvable at moderate draw counts:
//!
//! * left side: `(Y_i − λ_i)(f(Y) − f(λ) − ∇f(λ)·(Y − λ))`, plus the exact
//!   `λ_i ∂_i f(λ)` that the linear part contributes;
//! * right side: `Y_i ∂_i f(Y) − (Y_i − λ_i) ∂_i f(λ)`;
//! * `M/2` identity: `Y_i log(Y_i/λ_i) − (Y_i − λ_i)`.

use crate::random::{sample_poisson, RngStream};
use crate::{Error, Result};

/// A scalar function on `R_+^M` with analytic gradient.
pub trait SmoothFunction {
    fn dim(&self) -> usize;

    fn value(&self, y: &[f64]) -> f64;

    fn gradient(&self, y: &[f64], out: &mut [f64]);
}

/// `f(y) = log((Σ_i y_i + c) / M)`.
#[derive(Debug, Clone, Copy)]
pub struct LogTotalCount {
    pub dim: usize,
    pub offset: f64,
}

impl SmoothFunction for LogTotalCount {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, y: &[f64]) -> f64 {
        ((y.iter().sum::<f64>() + self.offset) / self.dim as f64).ln()
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let g = 1.0 / (y.iter().sum::<f64>() + self.offset);
        out.fill(g);
    }
}

/// Per-coordinate Monte-Carlo estimates of both sides of the Stein identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Standard error of `lhs_i − rhs_i` (paired over draws).
    pub stderr: Vec<f64>,
    /// `mean_i (lhs_i − rhs_i)` and its standard error.
    pub mean_gap: f64,
    pub mean_gap_stderr: f64,
    pub lambda_norm: f64,
}

impl SteinCheck {
    pub fn gap(&self, i: usize) -> f64 {
        self.lhs[i] - self.rhs[i]
    }

    /// `|lhs_i − rhs_i| <= max(3·stderr_i, 0.5·‖λ‖^{-1/2})` for every `i`.
    pub fn within_tolerance(&self) -> bool {
        let floor = 0.5 / self.lambda_norm.sqrt();
        (0..self.lhs.len()).all(|i| self.gap(i).abs() <= (3.0 * self.stderr[i]).max(floor))
    }
}

fn check_lambda(lambda: &[f64], n_draws: usize) -> Result<()> {
    if n_draws < 2 {
        return Err(Error::domain(format!("need at least 2 draws, got {n_draws}")));
    }
    if lambda.is_empty() {
        return Err(Error::domain("lambda must be non-empty"));
    }
    if let Some(i) = lambda.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::domain(format!("lambda must be > 0, got {} at {i}", lambda[i])));
    }
    Ok(())
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

pub fn stein_lemma_check<F: SmoothFunction>(
    f: &F,
    lambda: &[f64],
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<SteinCheck> {
    check_lambda(lambda, n_draws)?;
    let m = lambda.len();
    if f.dim() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: f.dim(),
        });
    }
    let f_lambda = f.value(lambda);
    let mut grad_lambda = vec![0.0; m];
    f.gradient(lambda, &mut grad_lambda);

    let mut y = vec![0.0; m];
    let mut grad_y = vec![0.0; m];
    let mut lhs = vec![Moments::default(); m];
    let mut rhs = vec![Moments::default(); m];
    let mut diff = vec![Moments::default(); m];
    let mut avg_diff = Moments::default();
    for _ in 0..n_draws {
        for (yi, &li) in y.iter_mut().zip(lambda) {
            *yi = sample_poisson(li, rng)? as f64;
        }
        f.gradient(&y, &mut grad_y);
        let linear: f64 = y
            .iter()
            .zip(lambda)
            .zip(&grad_lambda)
            .map(|((yi, li), g)| g * (yi - li))
            .sum();
        let residual = f.value(&y) - f_lambda - linear;
        let mut total = 0.0;
        for i in 0..m {
            let centered = y[i] - lambda[i];
            let l = centered * residual;
            let r = y[i] * grad_y[i] - centered * grad_lambda[i];
            lhs[i].push(l);
            rhs[i].push(r);
            diff[i].push(l - r);
            total += l - r + lambda[i] * grad_lambda[i];
        }
        avg_diff.push(total / m as f64);
    }
    Ok(SteinCheck {
        lhs: (0..m)
            .map(|i| lhs[i].mean + lambda[i] * grad_lambda[i])
            .collect(),
        rhs: rhs.iter().map(|r| r.mean).collect(),
        stderr: diff.iter().map(Moments::stderr).collect(),
        mean_gap: avg_diff.mean,
        mean_gap_stderr: avg_diff.stderr(),
        lambda_norm: lambda.iter().map(|l| l * l).sum::<f64>().sqrt(),
    })
}

/// Monte-Carlo estimate of `E[Σ_i Y_i log(Y_i / λ_i)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfMCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub m: usize,
}

impl HalfMCheck {
    /// `|estimate − M/2| <= max(3·stderr, 0.02·M)`.
    pub fn within_tolerance(&self) -> bool {
        let m = self.m as f64;
        (self.estimate - m / 2.0).abs() <= (3.0 * self.stderr).max(0.02 * m)
    }
}

pub fn half_m_identity_check(
    lambda: &[f64],
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<HalfMCheck> {
    check_lambda(lambda, n_draws)?;
    let mut acc = Moments::default();
    for _ in 0..n_draws {
        let mut total = 0.0;
        for &l in lambda {
            let y = sample_poisson(l, rng)? as f64;
            let ylog = if y == 0.0 { 0.0 } else { y * (y / l).ln() };
            total += ylog - (y - l);
        }
        acc.push(total);
    }
    Ok(HalfMCheck {
        estimate: acc.mean,
        stderr: acc.stderr(),
        m: lambda.len(),
    })
}
