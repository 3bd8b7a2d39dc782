//! Generalized Kullback-Leibler divergence between nonnegative vectors.

use crate::{Error, Result};

/// Compensated (Neumaier) summation.
///
/// EM runs evaluate the discrepancy thousands of times on sums of several
/// thousand terms; plain summation drifts enough to break monotonicity checks
/// at the 1e-12 level.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `u log(u/v) + v - u` with `0 log 0 = 0`.
#[inline]
pub(crate) fn kl_term(u: f64, v: f64) -> f64 {
    if u == 0.0 {
        v
    } else {
        u * (u / v).ln() + v - u
    }
}

fn check_pair(u: &[f64], v_len: usize) -> Result<()> {
    if u.len() != v_len {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            actual: v_len,
        });
    }
    if let Some(i) = u.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!(
            "KL divergence needs u >= 0, got u[{i}] = {}",
            u[i]
        )));
    }
    Ok(())
}

/// `D_KL(u, v) = Σ u_i log(u_i / v_i) + v_i - u_i`, with `0 log 0 = 0`.
///
/// Requires `u >= 0` and `v > 0` component-wise.
pub fn kl_divergence(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v.len())?;
    if let Some(i) = v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!(
            "KL divergence needs v > 0, got v[{i}] = {}",
            v[i]
        )));
    }
    Ok(neumaier_sum(u.iter().zip(v).map(|(&a, &b)| kl_term(a, b))))
}

/// `D_KL(u, exp(log_v))` computed without leaving log space for the `u log v`
/// part.
pub fn kl_divergence_log(u: &[f64], log_v: &[f64]) -> Result<f64> {
    check_pair(u, log_v.len())?;
    if let Some(i) = log_v.iter().position(|x| !x.is_finite()) {
        return Err(Error::domain(format!("non-finite log prediction at {i}")));
    }
    Ok(neumaier_sum(u.iter().zip(log_v).map(|(&a, &lb)| {
        if a == 0.0 {
            lb.exp()
        } else {
            a * (a.ln() - lb) + lb.exp() - a
        }
    })))
}
