//! Stopping criteria for the EM iteration.
//!
//! All estimators take prediction vectors (or their logarithms) rather than
//! EM states, so any estimator `λ̂(Y)` can be scored:
//!
//! * PAUKL: `D_KL(y, λ̂) + (y∇)·log λ̂ − M/2`, with the divergence term
//!   replaced by a one-probe finite difference along a normal direction η.
//! * PUKLA: `‖λ̂‖₁ − y·log λ̂↓`, with `y·log λ̂↓` approximated along a
//!   Rademacher direction ζ.
//! * REKL: centered finite difference along a normal direction.
//! * PDP: `|d_KL − M/2|`, together with the discrepancy principle
//!   `d_KL < M/2`.
//!
//! PUKLA and REKL carry an unknown additive constant; only their argmin is
//! meaningful. PAUKL estimates the risk itself.

mod stein;

pub use stein::{
    half_m_identity_check, stein_lemma_check, HalfMCheck, LogTotalCount, SmoothFunction,
    SteinCheck,
};

use crate::em::CoupledStep;
use crate::kl::{kl_divergence, kl_divergence_log, neumaier_sum};
use crate::{Error, Result};

fn check_lengths(expected: usize, others: &[&[f64]]) -> Result<()> {
    for o in others {
        if o.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: o.len(),
            });
        }
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::domain(format!("non-finite {name} at index {i}"))),
        None => Ok(()),
    }
}

/// `Σ_i y_i·d_i·(log λ̂(y + ε d)_i − log λ̂(y)_i) / ε`.
///
/// Monte-Carlo estimate of `(y∇)·log λ̂` when `d` is standard normal, and the
/// PUKLA correction when `d` is Rademacher.
pub fn directional_term(
    y: &[f64],
    log_pred: &[f64],
    log_pred_shifted: &[f64],
    direction: &[f64],
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_lengths(y.len(), &[log_pred, log_pred_shifted, direction])?;
    check_finite("log prediction", log_pred)?;
    check_finite("shifted log prediction", log_pred_shifted)?;
    Ok(neumaier_sum(
        y.iter()
            .zip(direction)
            .zip(log_pred.iter().zip(log_pred_shifted))
            .map(|((yi, di), (l0, l1))| yi * di * (l1 - l0)),
    ) / epsilon)
}

/// Poisson asymptotically unbiased KL risk estimate.
pub fn paukl(
    y: &[f64],
    log_pred: &[f64],
    log_pred_eta: &[f64],
    eta: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let divergence = directional_term(y, log_pred, log_pred_eta, eta, epsilon)?;
    let d_kl = kl_divergence_log(y, log_pred)?;
    Ok(d_kl + divergence - y.len() as f64 / 2.0)
}

/// PAUKL from the prediction itself and a caller-supplied value of
/// `(y∇)·log λ̂`, e.g. an exact one.
pub fn paukl_with_divergence(y: &[f64], pred: &[f64], divergence: f64) -> Result<f64> {
    let d_kl = kl_divergence(y, pred)?;
    Ok(d_kl + divergence - y.len() as f64 / 2.0)
}

/// Two-reconstruction PUKLA approximation (defined up to a constant).
pub fn pukla_approx(
    y: &[f64],
    log_pred: &[f64],
    log_pred_zeta: &[f64],
    zeta: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let correction = directional_term(y, log_pred, log_pred_zeta, zeta, epsilon)?;
    let mass = neumaier_sum(log_pred.iter().map(|l| l.exp()));
    let cross = neumaier_sum(y.iter().zip(log_pred).map(|(a, l)| a * l));
    Ok(mass - (cross - correction))
}

/// REKL estimate (defined up to a constant).
///
/// `Σ_i λ̂_i − y_i log λ̂_i + M y_i η_i / (2ε‖η‖²) (log λ̂(y+εη)_i − log λ̂(y−εη)_i)`.
pub fn rekl(
    y: &[f64],
    pred: &[f64],
    log_pred_plus: &[f64],
    log_pred_minus: &[f64],
    eta: &[f64],
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_lengths(y.len(), &[pred, log_pred_plus, log_pred_minus, eta])?;
    if let Some(i) = pred.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::domain(format!("prediction must be > 0, got {} at {i}", pred[i])));
    }
    check_finite("log prediction (plus)", log_pred_plus)?;
    check_finite("log prediction (minus)", log_pred_minus)?;
    let norm2 = neumaier_sum(eta.iter().map(|e| e * e));
    if !(norm2 > 0.0) {
        return Err(Error::domain("REKL probe has zero norm"));
    }
    let m = y.len() as f64;
    let scale = m / (2.0 * epsilon * norm2);
    Ok(neumaier_sum(y.iter().zip(pred).enumerate().map(|(i, (yi, pi))| {
        let fit = pi - if *yi == 0.0 { 0.0 } else { yi * pi.ln() };
        let trace = scale * yi * eta[i] * (log_pred_plus[i] - log_pred_minus[i]);
        fit + trace
    })))
}

/// Outcome of the Poisson discrepancy principle at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// `d_KL < M/2`.
    pub satisfied: bool,
    /// `|d_KL − M/2|`.
    pub pdp: f64,
}

pub fn poisson_discrepancy(d_kl: f64, m: usize) -> Discrepancy {
    let half = m as f64 / 2.0;
    Discrepancy {
        satisfied: d_kl < half,
        pdp: (d_kl - half).abs(),
    }
}

/// All stopping quantities at one EM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSample {
    pub k: usize,
    pub d_kl: f64,
    pub paukl: f64,
    pub pukla: f64,
    pub rekl: f64,
    pub pdp: f64,
    pub m: usize,
}

impl RiskSample {
    /// Evaluates every estimator from a coupled step. The step must carry the
    /// Rademacher and REKL trajectories.
    pub fn from_step(step: &CoupledStep<'_>) -> Result<Self> {
        let y = step.data;
        let eps = step.epsilon;
        let missing = |what: &str| Error::domain(format!("coupled run has no {what} trajectory"));
        let log_rad = step.log_rademacher.ok_or_else(|| missing("Rademacher"))?;
        let zeta = step.probes.zeta.as_deref().ok_or_else(|| missing("Rademacher"))?;
        let log_plus = step.log_rekl_plus.ok_or_else(|| missing("REKL"))?;
        let log_minus = step.log_rekl_minus.ok_or_else(|| missing("REKL"))?;
        let rekl_eta = step.probes.rekl_eta().ok_or_else(|| missing("REKL"))?;

        let d_kl = kl_divergence(y, step.main.prediction())?;
        let divergence = directional_term(y, step.log_main, step.log_normal, &step.probes.eta, eps)?;
        let sample = RiskSample {
            k: step.k,
            d_kl,
            paukl: d_kl + divergence - y.len() as f64 / 2.0,
            pukla: pukla_approx(y, step.log_main, log_rad, zeta, eps)?,
            rekl: rekl(y, step.main.prediction(), log_plus, log_minus, rekl_eta, eps)?,
            pdp: poisson_discrepancy(d_kl, y.len()).pdp,
            m: y.len(),
        };
        if ![sample.d_kl, sample.paukl, sample.pukla, sample.rekl, sample.pdp]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::domain(format!("non-finite risk value at k = {}", step.k)));
        }
        Ok(sample)
    }

    pub fn discrepancy_satisfied(&self) -> bool {
        poisson_discrepancy(self.d_kl, self.m).satisfied
    }
}
