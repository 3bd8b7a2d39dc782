//! Seeded experiment pipelines: data simulation, single trials, sweeps over
//! noise realizations, and the large-flux discrepancy demonstration.
//!
//! Random streams, all keyed by the config seed:
//!
//! * stream `0`: the irregular PSF of `mismatched_psf` mode, shared by every
//!   realization;
//! * stream `((i + 1) << 8) | 1`: Poisson data of realization `i`;
//! * stream `((i + 1) << 8) | 2`: probe vectors of realization `i`.
//!
//! A trial therefore depends only on the config and its own index.

mod config;
mod lemma5;
mod phantom;
mod sweep;

pub use config::{ExperimentConfig, Mode, PhantomSource, DEFAULT_PSF_NOISE_SCALE};
pub use lemma5::{lemma5_demo, Lemma5Config, Lemma5Report, Lemma5Row};
pub use phantom::{rescale_to_flux, synthetic_phantom};
pub use sweep::{run_sweep, SummaryRow, SweepResult, TrialFailure, TrialOutcome};

use crate::em::{run_coupled, run_trajectory, CoupledConfig, EmProblem};
use crate::image::Image;
use crate::io::read_image;
use crate::metrics::{argmin_iteration, OracleSample, RiskCurve, Rule, Stop};
use crate::operators::{
    convolution_operator, count_noise_psf, gaussian_psf, ConvolutionOperator, ForwardOperator, Psf,
};
use crate::random::{sample_poisson_image, RngStream};
use crate::risk::RiskSample;
use crate::{Error, Result};

/// Stream of the irregular data-generation PSF.
pub const PSF_STREAM: u64 = 0;

pub fn data_stream(realization: usize) -> u64 {
    ((realization as u64 + 1) << 8) | 1
}

pub fn probe_stream(realization: usize) -> u64 {
    ((realization as u64 + 1) << 8) | 2
}

/// Everything about an experiment that does not change across noise
/// realizations.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    x_true: Image,
    background: Image,
    reconstruction_psf: Psf,
    /// Present in `mismatched_psf` mode only.
    generator_psf: Option<Psf>,
    reconstruction_op: ConvolutionOperator,
    lambda_true: Image,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let phantom = match &config.phantom {
            PhantomSource::Synthetic { width, height } => {
                synthetic_phantom(crate::image::Dims::new(*width, *height))?
            }
            PhantomSource::File { path } => read_image(path)?,
        };
        let x_true = rescale_to_flux(&phantom, config.flux)?;
        let dims = x_true.dims();
        let background = Image::filled(dims, config.background_level)?;
        let reconstruction_psf = gaussian_psf(dims, config.psf_sigma)?;
        let reconstruction_op = convolution_operator(&reconstruction_psf, dims)?;
        let generator_psf = match config.mode {
            Mode::InverseCrime => None,
            Mode::MismatchedPsf => {
                let mut rng = RngStream::new(config.seed, PSF_STREAM);
                Some(count_noise_psf(
                    &reconstruction_psf,
                    config.psf_noise_scale,
                    &mut rng,
                )?)
            }
        };
        let mean_counts = match &generator_psf {
            None => reconstruction_op.apply(&x_true)?,
            Some(psf) => convolution_operator(psf, dims)?.apply(&x_true)?,
        };
        // Periodic FFT convolution of a nonnegative object can leave
        // rounding-level negatives in dark regions.
        let lambda_true = Image::new(
            dims,
            mean_counts
                .values()
                .iter()
                .zip(background.values())
                .map(|(h, b)| h.max(0.0) + b)
                .collect(),
        )?;
        Ok(Experiment {
            config: config.clone(),
            x_true,
            background,
            reconstruction_psf,
            generator_psf,
            reconstruction_op,
            lambda_true,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn x_true(&self) -> &Image {
        &self.x_true
    }

    pub fn background(&self) -> &Image {
        &self.background
    }

    /// `λ = H_gen x* + b`, with the generator PSF in mismatched mode.
    pub fn lambda_true(&self) -> &Image {
        &self.lambda_true
    }

    pub fn reconstruction_psf(&self) -> &Psf {
        &self.reconstruction_psf
    }

    pub fn generator_psf(&self) -> Option<&Psf> {
        self.generator_psf.as_ref()
    }

    /// The smooth Gaussian operator used for every reconstruction.
    pub fn reconstruction_operator(&self) -> &ConvolutionOperator {
        &self.reconstruction_op
    }

    pub fn sample_data(&self, realization: usize) -> Result<Image> {
        let mut rng = RngStream::new(self.config.seed, data_stream(realization));
        sample_poisson_image(&self.lambda_true, &mut rng)
    }

    pub fn problem<'a>(&'a self, data: &Image) -> Result<EmProblem<'a>> {
        EmProblem::new_relaxed(&self.reconstruction_op, data, &self.background)
    }
}

/// One simulated data set with its ground truth.
#[derive(Debug)]
pub struct Simulation {
    pub experiment: Experiment,
    pub data: Image,
}

impl Simulation {
    pub fn x_true(&self) -> &Image {
        self.experiment.x_true()
    }

    pub fn lambda_true(&self) -> &Image {
        self.experiment.lambda_true()
    }

    pub fn reconstruction_operator(&self) -> &ConvolutionOperator {
        self.experiment.reconstruction_operator()
    }
}

/// Builds the experiment and draws one data set from `rng`.
pub fn simulate_data(config: &ExperimentConfig, rng: &mut RngStream) -> Result<Simulation> {
    let experiment = Experiment::new(config)?;
    let data = sample_poisson_image(experiment.lambda_true(), rng)?;
    Ok(Simulation { experiment, data })
}

/// Stopping iterations of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub realization: usize,
    /// One entry per rule, in [`Rule::ALL`] order. PDP uses the first
    /// crossing of `M/2`, every other rule the global minimum of its curve.
    pub stops: Vec<(Rule, Stop)>,
    /// First `k` with `d_KL < M/2`, if any.
    pub discrepancy_crossing: Option<usize>,
    pub k_max: usize,
}

impl TrialReport {
    pub fn from_curve(realization: usize, curve: &RiskCurve) -> Result<Self> {
        let stops = Rule::ALL
            .into_iter()
            .filter_map(|rule| curve.series(rule).map(|s| (rule, s)))
            .map(|(rule, s)| {
                let stop = if rule == Rule::Pdp {
                    pdp_stop(curve, &s)
                } else {
                    argmin_iteration(&s)
                };
                stop.map(|stop| (rule, stop))
                    .ok_or_else(|| Error::domain(format!("{rule} curve has no finite value")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialReport {
            realization,
            stops,
            discrepancy_crossing: curve.discrepancy_crossing(),
            k_max: curve.len(),
        })
    }

    pub fn stop(&self, rule: Rule) -> Option<Stop> {
        self.stops.iter().find(|(r, _)| *r == rule).map(|(_, s)| *s)
    }
}

/// The discrepancy principle stops at the first `k` with `d_KL < M/2`. When
/// that never happens the closest approach is reported as not reached.
fn pdp_stop(curve: &RiskCurve, pdp: &[f64]) -> Option<Stop> {
    match curve.discrepancy_crossing() {
        Some(k) => Some(Stop {
            k,
            value: pdp[k - 1],
            reached: true,
        }),
        None => argmin_iteration(pdp).map(|s| Stop {
            reached: false,
            ..s
        }),
    }
}

/// Simulates realization `realization`, runs the coupled trajectories to
/// `k_max` and records every risk and oracle value.
pub fn run_trial(experiment: &Experiment, realization: usize) -> Result<(RiskCurve, TrialReport)> {
    let config = experiment.config();
    let data = experiment.sample_data(realization)?;
    let problem = experiment.problem(&data)?;
    let coupled = CoupledConfig {
        epsilon: config.epsilon,
        pukla: true,
        rekl: config.rekl_probe,
    };
    let mut rng = RngStream::new(config.seed, probe_stream(realization));
    let lambda = experiment.lambda_true().values();
    let x_true = experiment.x_true().values();
    let mut curve = RiskCurve::new(true);
    let mut failure = None;
    run_coupled(&problem, config.k_max, &coupled, &mut rng, |step| {
        if failure.is_some() {
            return;
        }
        let result = RiskSample::from_step(step).and_then(|sample| {
            let oracle =
                OracleSample::compute(lambda, step.main.prediction(), x_true, step.main.x())?;
            curve.push(sample, Some(oracle))
        });
        if let Err(e) = result {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let report = TrialReport::from_curve(realization, &curve)?;
    Ok((curve, report))
}

/// `d_KL(k, y)` along the plain EM trajectory of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyTrace {
    pub d_kl: Vec<f64>,
    /// Number of data pixels `M`.
    pub m: usize,
}

impl DiscrepancyTrace {
    pub fn threshold(&self) -> f64 {
        self.m as f64 / 2.0
    }

    /// First `k` (from 1) with `d_KL < M/2`.
    pub fn crossing(&self) -> Option<usize> {
        let t = self.threshold();
        self.d_kl.iter().position(|&d| d < t).map(|i| i + 1)
    }

    pub fn min(&self) -> f64 {
        self.d_kl.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs EM alone (no probes) for `k_max` iterations on realization
/// `realization` and records the discrepancy.
pub fn discrepancy_trace(
    experiment: &Experiment,
    realization: usize,
    k_max: usize,
) -> Result<DiscrepancyTrace> {
    let data = experiment.sample_data(realization)?;
    let problem = experiment.problem(&data)?;
    let y = problem.data().to_vec();
    let mut d_kl = Vec::with_capacity(k_max);
    let mut failure = None;
    run_trajectory(&problem, k_max, |s| {
        if failure.is_none() {
            match s.discrepancy(&y) {
                Ok(d) => d_kl.push(d),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(DiscrepancyTrace { d_kl, m: y.len() })
}
