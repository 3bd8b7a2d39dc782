//! Multi-realization sweeps and their summary table.

use rayon::prelude::*;

use super::{run_trial, Experiment, ExperimentConfig, TrialReport};
use crate::metrics::{aggregate_risks, AggregatedRisks, RiskCurve, Rule};
use crate::{Error, Result};

/// A realization whose trial raised an error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub realization: usize,
    pub message: String,
    /// True for numerical breakdowns (non-finite or non-positive predictions).
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Completed { curve: RiskCurve, report: TrialReport },
    Failed(TrialFailure),
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub rule: Rule,
    /// Mean and sample standard deviation of the stopping iteration over all
    /// completed trials.
    pub mean_k: f64,
    pub std_k: f64,
    pub n_failed: usize,
    /// Completed trials whose minimum was not reached within `k_max`.
    pub n_not_reached: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    /// Indexed by realization.
    pub trials: Vec<TrialOutcome>,
    /// Averages over the completed trials.
    pub aggregate: AggregatedRisks,
}

impl SweepResult {
    pub fn completed(&self) -> impl Iterator<Item = (&RiskCurve, &TrialReport)> {
        self.trials.iter().filter_map(|t| match t {
            TrialOutcome::Completed { curve, report } => Some((curve, report)),
            TrialOutcome::Failed(_) => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialFailure> {
        self.trials.iter().filter_map(|t| match t {
            TrialOutcome::Failed(f) => Some(f),
            TrialOutcome::Completed { .. } => None,
        })
    }

    pub fn n_failed(&self) -> usize {
        self.failures().count()
    }

    /// Stopping iterations of `rule` over completed trials, by realization.
    pub fn stopping_iterations(&self, rule: Rule) -> Vec<usize> {
        self.completed()
            .filter_map(|(_, r)| r.stop(rule))
            .map(|s| s.k)
            .collect()
    }

    /// Mean ± σ of the stopping iteration for every rule.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let n_failed = self.n_failed();
        Rule::ALL
            .into_iter()
            .map(|rule| {
                let stops: Vec<_> = self.completed().filter_map(|(_, r)| r.stop(rule)).collect();
                let ks: Vec<f64> = stops.iter().map(|s| s.k as f64).collect();
                let (mean_k, std_k) = mean_std(&ks);
                SummaryRow {
                    rule,
                    mean_k,
                    std_k,
                    n_failed,
                    n_not_reached: stops.iter().filter(|s| !s.reached).count(),
                }
            })
            .collect()
    }
}

/// Mean and sample standard deviation; `(NaN, NaN)` for no values and zero
/// spread for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every realization of `config`, in parallel on `workers` threads
/// (all available cores when `None`). The result does not depend on the
/// worker count.
pub fn run_sweep(config: &ExperimentConfig, workers: Option<usize>) -> Result<SweepResult> {
    let experiment = Experiment::new(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let trials: Vec<TrialOutcome> = pool.install(|| {
        (0..config.n_realizations)
            .into_par_iter()
            .map(|i| match run_trial(&experiment, i) {
                Ok((curve, report)) => TrialOutcome::Completed { curve, report },
                Err(e) => TrialOutcome::Failed(TrialFailure {
                    realization: i,
                    numerical: e.is_numerical(),
                    message: e.to_string(),
                }),
            })
            .collect()
    });
    let curves: Vec<RiskCurve> = trials
        .iter()
        .filter_map(|t| match t {
            TrialOutcome::Completed { curve, .. } => Some(curve.clone()),
            TrialOutcome::Failed(_) => None,
        })
        .collect();
    if curves.is_empty() {
        return Err(Error::AllTrialsFailed(trials.len()));
    }
    let aggregate = aggregate_risks(&curves)?;
    Ok(SweepResult {
        config: config.clone(),
        trials,
        aggregate,
    })
}
