//! Ground-truth-aware errors, empirical risks and stopping-iteration
//! extraction.

use std::fmt;
use std::str::FromStr;

use crate::kl::{kl_divergence, neumaier_sum};
use crate::risk::RiskSample;
use crate::{Error, Result};

/// Iterations without a new minimum before an online search gives up.
pub const DEFAULT_PATIENCE: usize = 50;

/// `PE = D_KL(λ, λ̂)`.
pub fn predictive_error(lambda_true: &[f64], pred: &[f64]) -> Result<f64> {
    if let Some(i) = lambda_true.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::domain(format!(
            "true mean must be > 0, got {} at {i}",
            lambda_true[i]
        )));
    }
    kl_divergence(lambda_true, pred)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionErrors {
    /// `‖x* − x_k‖₂`.
    pub l2: f64,
    /// `D_KL(x*, x_k)`.
    pub kl: f64,
}

pub fn reconstruction_errors(x_true: &[f64], x_k: &[f64]) -> Result<ReconstructionErrors> {
    let kl = kl_divergence(x_true, x_k)?;
    let l2 = neumaier_sum(x_true.iter().zip(x_k).map(|(a, b)| (a - b) * (a - b))).sqrt();
    Ok(ReconstructionErrors { l2, kl })
}

/// Truth-based quantities at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub pe: f64,
    pub err_kl: f64,
    pub err_l2: f64,
}

impl OracleSample {
    pub fn compute(lambda_true: &[f64], pred: &[f64], x_true: &[f64], x_k: &[f64]) -> Result<Self> {
        let errs = reconstruction_errors(x_true, x_k)?;
        Ok(OracleSample {
            pe: predictive_error(lambda_true, pred)?,
            err_kl: errs.kl,
            err_l2: errs.l2,
        })
    }
}

/// A quantity whose minimum over `k` defines a stopping iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Pe,
    Paukl,
    Pukla,
    Rekl,
    Pdp,
    ErrKl,
    ErrL2,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::Pe,
        Rule::Paukl,
        Rule::Pukla,
        Rule::Rekl,
        Rule::Pdp,
        Rule::ErrKl,
        Rule::ErrL2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Pe => "PE",
            Rule::Paukl => "PAUKL",
            Rule::Pukla => "PUKLA",
            Rule::Rekl => "REKL",
            Rule::Pdp => "PDP",
            Rule::ErrKl => "err_KL",
            Rule::ErrL2 => "err_l2",
        }
    }

    /// Rules that need the true object.
    pub fn needs_truth(self) -> bool {
        matches!(self, Rule::Pe | Rule::ErrKl | Rule::ErrL2)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown rule {s:?}")))
    }
}

/// Per-iteration risk values of one reconstruction, `k = 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiskCurve {
    samples: Vec<RiskSample>,
    oracle: Option<Vec<OracleSample>>,
}

impl RiskCurve {
    /// Empty curve; `with_oracle` fixes whether truth-based values follow.
    pub fn new(with_oracle: bool) -> Self {
        RiskCurve {
            samples: Vec::new(),
            oracle: with_oracle.then(Vec::new),
        }
    }

    pub fn from_parts(samples: Vec<RiskSample>, oracle: Option<Vec<OracleSample>>) -> Result<Self> {
        let mut curve = RiskCurve::new(oracle.is_some());
        let mut oracle = oracle.map(Vec::into_iter);
        for s in samples {
            let o = match &mut oracle {
                Some(it) => Some(it.next().ok_or_else(|| {
                    Error::domain("oracle track is shorter than the risk samples")
                })?),
                None => None,
            };
            curve.push(s, o)?;
        }
        if oracle.is_some_and(|mut it| it.next().is_some()) {
            return Err(Error::domain("oracle track is longer than the risk samples"));
        }
        Ok(curve)
    }

    /// Appends the next iteration. `k` must continue the sequence `1, 2, …`
    /// and `oracle` must be present iff the curve carries an oracle track.
    pub fn push(&mut self, sample: RiskSample, oracle: Option<OracleSample>) -> Result<()> {
        let expected = self.samples.len() + 1;
        if sample.k != expected {
            return Err(Error::domain(format!(
                "risk curve expects k = {expected}, got {}",
                sample.k
            )));
        }
        match (&mut self.oracle, oracle) {
            (Some(track), Some(o)) => track.push(o),
            (None, None) => {}
            (Some(_), None) => return Err(Error::domain("missing oracle sample")),
            (None, Some(_)) => return Err(Error::domain("curve has no oracle track")),
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[RiskSample] {
        &self.samples
    }

    pub fn oracle(&self) -> Option<&[OracleSample]> {
        self.oracle.as_deref()
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle.is_some()
    }

    pub fn d_kl(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d_kl).collect()
    }

    /// The curve minimized by `rule`, or `None` for a truth-based rule on a
    /// curve without oracle track.
    pub fn series(&self, rule: Rule) -> Option<Vec<f64>> {
        let from_samples = |f: fn(&RiskSample) -> f64| Some(self.samples.iter().map(f).collect());
        let from_oracle =
            |f: fn(&OracleSample) -> f64| self.oracle.as_ref().map(|o| o.iter().map(f).collect());
        match rule {
            Rule::Paukl => from_samples(|s| s.paukl),
            Rule::Pukla => from_samples(|s| s.pukla),
            Rule::Rekl => from_samples(|s| s.rekl),
            Rule::Pdp => from_samples(|s| s.pdp),
            Rule::Pe => from_oracle(|o| o.pe),
            Rule::ErrKl => from_oracle(|o| o.err_kl),
            Rule::ErrL2 => from_oracle(|o| o.err_l2),
        }
    }

    /// First `k` with `d_KL(k) < M/2`.
    pub fn discrepancy_crossing(&self) -> Option<usize> {
        self.samples
            .iter()
            .find(|s| s.discrepancy_satisfied())
            .map(|s| s.k)
    }
}

/// Minimum of a curve sampled at `k = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stop {
    pub k: usize,
    pub value: f64,
    /// False when the run ended while the curve was still descending.
    pub reached: bool,
}

/// Earliest global minimum of `curve`, indexing from `k = 1`.
///
/// The minimum counts as not reached when it sits on the last sample and the
/// curve decreases strictly over the final `min(DEFAULT_PATIENCE, n − 1)`
/// steps. Returns `None` for an empty curve or one without finite values.
pub fn argmin_iteration(curve: &[f64]) -> Option<Stop> {
    argmin_with_patience(curve, DEFAULT_PATIENCE)
}

pub fn argmin_with_patience(curve: &[f64], patience: usize) -> Option<Stop> {
    let (idx, &value) = curve
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *v >= *b => best,
            _ => Some((i, v)),
        })?;
    let n = curve.len();
    let window = patience.min(n - 1);
    let descending = idx == n - 1
        && window > 0
        && curve[n - 1 - window..].windows(2).all(|w| w[1] < w[0]);
    Some(Stop {
        k: idx + 1,
        value,
        reached: !descending,
    })
}

/// Streaming minimum search that declares the minimum found after
/// `patience` iterations without improvement.
#[derive(Debug, Clone)]
pub struct OnlineArgmin {
    patience: usize,
    best: Option<(usize, f64)>,
    last_k: usize,
}

impl OnlineArgmin {
    pub fn new(patience: usize) -> Self {
        OnlineArgmin {
            patience,
            best: None,
            last_k: 0,
        }
    }

    /// Feeds the value at iteration `k`; returns true once the minimum is
    /// considered found.
    pub fn push(&mut self, k: usize, value: f64) -> bool {
        self.last_k = k;
        match self.best {
            Some((_, b)) if !(value < b) => {}
            _ if value.is_finite() => self.best = Some((k, value)),
            _ => {}
        }
        self.is_done()
    }

    pub fn is_done(&self) -> bool {
        self.best
            .is_some_and(|(k, _)| self.last_k >= k + self.patience)
    }

    /// The best iterate so far, `reached` only once the patience ran out.
    pub fn stop(&self) -> Option<Stop> {
        self.best.map(|(k, value)| Stop {
            k,
            value,
            reached: self.is_done(),
        })
    }
}

impl Default for OnlineArgmin {
    fn default() -> Self {
        Self::new(DEFAULT_PATIENCE)
    }
}

/// Per-iteration mean and sample standard deviation across curves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Band {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Band {
    fn from_columns(columns: &[Vec<f64>]) -> Band {
        let len = columns[0].len();
        let n = columns.len() as f64;
        let mut band = Band {
            mean: Vec::with_capacity(len),
            std: Vec::with_capacity(len),
        };
        for k in 0..len {
            // Shifted by the first value so identical columns average exactly.
            let pivot = columns[0][k];
            let mean = pivot + neumaier_sum(columns.iter().map(|c| c[k] - pivot)) / n;
            let var = if columns.len() > 1 {
                neumaier_sum(columns.iter().map(|c| (c[k] - mean).powi(2))) / (n - 1.0)
            } else {
                0.0
            };
            band.mean.push(mean);
            band.std.push(var.sqrt());
        }
        band
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Cross-realization averages of a set of risk curves.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRisks {
    pub n_curves: usize,
    pub d_kl: Band,
    pub paukl: Band,
    pub pukla: Band,
    pub rekl: Band,
    pub pdp: Band,
    /// Sample predictive risk (mean PE), when every curve has an oracle.
    pub spr: Option<Band>,
    pub er_kl: Option<Band>,
    pub er_l2: Option<Band>,
}

impl AggregatedRisks {
    pub fn len(&self) -> usize {
        self.paukl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paukl.is_empty()
    }

    pub fn band(&self, rule: Rule) -> Option<&Band> {
        match rule {
            Rule::Paukl => Some(&self.paukl),
            Rule::Pukla => Some(&self.pukla),
            Rule::Rekl => Some(&self.rekl),
            Rule::Pdp => Some(&self.pdp),
            Rule::Pe => self.spr.as_ref(),
            Rule::ErrKl => self.er_kl.as_ref(),
            Rule::ErrL2 => self.er_l2.as_ref(),
        }
    }

    /// Fraction of iterations `k ∈ [k_lo, k_hi]` at which the SPR lies within
    /// mean PAUKL ± one standard deviation.
    pub fn spr_coverage(&self, k_lo: usize, k_hi: usize) -> Option<f64> {
        let spr = self.spr.as_ref()?;
        let lo = k_lo.max(1);
        let hi = k_hi.min(self.len());
        if lo > hi {
            return None;
        }
        let inside = (lo..=hi)
            .filter(|&k| {
                let i = k - 1;
                (spr.mean[i] - self.paukl.mean[i]).abs() <= self.paukl.std[i]
            })
            .count();
        Some(inside as f64 / (hi - lo + 1) as f64)
    }
}

/// Averages `curves` iteration by iteration. All curves must cover the same
/// `k` range.
pub fn aggregate_risks(curves: &[RiskCurve]) -> Result<AggregatedRisks> {
    let first = curves
        .first()
        .ok_or_else(|| Error::domain("no curves to aggregate"))?;
    if first.is_empty() {
        return Err(Error::domain("cannot aggregate empty curves"));
    }
    if let Some(c) = curves.iter().find(|c| c.len() != first.len()) {
        return Err(Error::domain(format!(
            "mismatched k ranges: 1..={} vs 1..={}",
            first.len(),
            c.len()
        )));
    }
    let band = |f: &dyn Fn(&RiskCurve) -> Option<Vec<f64>>| -> Option<Band> {
        let cols: Option<Vec<Vec<f64>>> = curves.iter().map(f).collect();
        cols.map(|c| Band::from_columns(&c))
    };
    let by_rule = |rule: Rule| band(&|c: &RiskCurve| c.series(rule));
    Ok(AggregatedRisks {
        n_curves: curves.len(),
        d_kl: band(&|c: &RiskCurve| Some(c.d_kl())).expect("risk samples always present"),
        paukl: by_rule(Rule::Paukl).expect("risk samples always present"),
        pukla: by_rule(Rule::Pukla).expect("risk samples always present"),
        rekl: by_rule(Rule::Rekl).expect("risk samples always present"),
        pdp: by_rule(Rule::Pdp).expect("risk samples always present"),
        spr: by_rule(Rule::Pe),
        er_kl: by_rule(Rule::ErrKl),
        er_l2: by_rule(Rule::ErrL2),
    })
}
