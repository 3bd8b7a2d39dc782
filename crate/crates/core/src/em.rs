//! The EM (Richardson-Lucy) iteration for Poisson data with background.
//!
//! `x_{k+1} = x_k / Hᵀ1 · Hᵀ(y / (H x_k + b))`, started from `x_0 = 1`.
//!
//! Besides single trajectories, this module runs the coupled trajectories
//! that the Monte-Carlo risk estimators need: the reconstruction on `y` plus
//! reconstructions on perturbed data `y ± ε·probe`, advanced in lockstep so
//! every iteration exposes all log-predictions for the same `k`.

use std::fmt;
use std::ops::ControlFlow;

use crate::image::Image;
use crate::kl::kl_divergence;
use crate::operators::{check_dims, ForwardOperator};
use crate::random::{sample_rademacher, sample_standard_normal, RngStream};
use crate::{Error, Result};

/// Iteration budget used when none is given.
pub const DEFAULT_K_MAX: usize = 20_000;

/// Finite-difference step of the Monte-Carlo probes.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Value substituted for iterate pixels that underflow to zero.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    /// `b > 0` everywhere.
    Strict,
    /// `b >= 0`; positivity of `Hx + b` is checked at every iterate instead.
    Relaxed,
}

/// Data, background, operator and starting point of one reconstruction.
#[derive(Clone)]
pub struct EmProblem<'a> {
    operator: &'a dyn ForwardOperator,
    data: Vec<f64>,
    background: Vec<f64>,
    initial: Vec<f64>,
}

impl fmt::Debug for EmProblem<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmProblem")
            .field("input_dims", &self.operator.input_dims())
            .field("output_dims", &self.operator.output_dims())
            .finish_non_exhaustive()
    }
}

impl<'a> EmProblem<'a> {
    /// Problem with strictly positive background and `x_0 = 1`.
    pub fn new(operator: &'a dyn ForwardOperator, data: &Image, background: &Image) -> Result<Self> {
        Self::build(operator, data, background, None, BackgroundMode::Strict)
    }

    /// Problem allowing zero background pixels (e.g. `b = 0`).
    pub fn new_relaxed(
        operator: &'a dyn ForwardOperator,
        data: &Image,
        background: &Image,
    ) -> Result<Self> {
        Self::build(operator, data, background, None, BackgroundMode::Relaxed)
    }

    pub fn build(
        operator: &'a dyn ForwardOperator,
        data: &Image,
        background: &Image,
        initial: Option<&Image>,
        mode: BackgroundMode,
    ) -> Result<Self> {
        check_dims("data", operator.output_dims(), data.dims())?;
        check_dims("background", operator.output_dims(), background.dims())?;
        data.check_nonnegative()?;
        match mode {
            BackgroundMode::Strict => background.check_positive()?,
            BackgroundMode::Relaxed => background.check_nonnegative()?,
        }
        let initial = match initial {
            Some(x0) => {
                check_dims("initial", operator.input_dims(), x0.dims())?;
                x0.check_positive()?;
                x0.values().to_vec()
            }
            None => vec![1.0; operator.input_dims().len()],
        };
        Ok(EmProblem {
            operator,
            data: data.values().to_vec(),
            background: background.values().to_vec(),
            initial,
        })
    }

    /// Same operator, background and start on new data. Negative entries are
    /// clamped to zero so the multiplicative update stays nonnegative.
    pub fn with_perturbed_data(&self, data: impl IntoIterator<Item = f64>) -> Self {
        let data: Vec<f64> = data.into_iter().map(|v| v.max(0.0)).collect();
        assert_eq!(data.len(), self.data.len(), "perturbed data length");
        EmProblem {
            operator: self.operator,
            data,
            background: self.background.clone(),
            initial: self.initial.clone(),
        }
    }

    /// Same problem with data multiplied by `factor > 0`.
    pub fn with_scaled_data(&self, factor: f64) -> Self {
        self.with_perturbed_data(self.data.iter().map(|v| v * factor))
    }

    pub fn operator(&self) -> &'a dyn ForwardOperator {
        self.operator
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    fn predict(&self, x: &[f64], iteration: usize) -> Result<Vec<f64>> {
        let mut pred = vec![0.0; self.data.len()];
        self.operator.apply_into(x, &mut pred);
        for (i, (p, b)) in pred.iter_mut().zip(&self.background).enumerate() {
            *p += b;
            if !p.is_finite() {
                return Err(Error::NumericalFailure {
                    trajectory: TrajectoryKind::Main,
                    iteration,
                });
            }
            if !(*p > 0.0) {
                return Err(Error::Singularity {
                    iteration,
                    index: i,
                });
            }
        }
        Ok(pred)
    }

    /// State at `k = 0`, i.e. `R_0(y) = x_0`.
    pub fn initial_state(&self) -> Result<EmState> {
        let prediction = self.predict(&self.initial, 0)?;
        Ok(EmState {
            k: 0,
            x: self.initial.clone(),
            prediction,
            floored: 0,
        })
    }
}

/// Iterate `x_k` with its cached prediction `λ̂_k = H x_k + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    k: usize,
    x: Vec<f64>,
    prediction: Vec<f64>,
    floored: usize,
}

impl EmState {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn prediction(&self) -> &[f64] {
        &self.prediction
    }

    pub fn log_prediction(&self) -> Vec<f64> {
        self.prediction.iter().map(|p| p.ln()).collect()
    }

    /// Cumulative number of pixels raised to [`UNDERFLOW_FLOOR`] so far.
    pub fn floored_pixels(&self) -> usize {
        self.floored
    }

    /// `d_KL(k, y) = D_KL(y, λ̂_k)`.
    pub fn discrepancy(&self, data: &[f64]) -> Result<f64> {
        kl_divergence(data, &self.prediction)
    }

    pub fn x_image(&self, problem: &EmProblem<'_>) -> Image {
        Image::new(problem.operator.input_dims(), self.x.clone())
            .expect("EM iterates are finite with operator dimensions")
    }
}

/// One EM update.
pub fn em_step(problem: &EmProblem<'_>, state: &EmState) -> Result<EmState> {
    let iteration = state.k + 1;
    let ratio: Vec<f64> = problem
        .data
        .iter()
        .zip(&state.prediction)
        .map(|(y, p)| y / p)
        .collect();
    let mut back = vec![0.0; state.x.len()];
    problem.operator.apply_adjoint_into(&ratio, &mut back);

    let mut floored = state.floored;
    let column_sums = problem.operator.column_sums();
    let mut x = Vec::with_capacity(state.x.len());
    for ((&xj, &bj), &cj) in state.x.iter().zip(&back).zip(column_sums) {
        let mut v = xj / cj * bj;
        if !v.is_finite() {
            return Err(Error::NumericalFailure {
                trajectory: TrajectoryKind::Main,
                iteration,
            });
        }
        if v <= 0.0 {
            v = UNDERFLOW_FLOOR;
            floored += 1;
        }
        x.push(v);
    }
    let prediction = problem.predict(&x, iteration)?;
    Ok(EmState {
        k: iteration,
        x,
        prediction,
        floored,
    })
}

/// Runs `k_max` EM steps, calling `observer` after each one.
pub fn run_trajectory(
    problem: &EmProblem<'_>,
    k_max: usize,
    mut observer: impl FnMut(&EmState),
) -> Result<EmState> {
    run_trajectory_until(problem, k_max, |s| {
        observer(s);
        ControlFlow::Continue(())
    })
}

/// Like [`run_trajectory`] but the observer may stop the run early.
pub fn run_trajectory_until(
    problem: &EmProblem<'_>,
    k_max: usize,
    mut observer: impl FnMut(&EmState) -> ControlFlow<()>,
) -> Result<EmState> {
    let mut state = problem.initial_state()?;
    for _ in 0..k_max {
        state = em_step(problem, &state)?;
        if observer(&state).is_break() {
            break;
        }
    }
    Ok(state)
}

/// Which of the coupled reconstructions a value or failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Reconstruction on the data `y`.
    Main,
    /// On `y + ε·η`, η standard normal.
    Normal,
    /// On `y + ε·ζ`, ζ Rademacher.
    Rademacher,
    /// On `y + ε·η'` with an independent normal probe (REKL only).
    ReklPlus,
    /// On `y − ε·η` (REKL centered difference).
    ReklMinus,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrajectoryKind::Main => "main",
            TrajectoryKind::Normal => "normal-probe",
            TrajectoryKind::Rademacher => "rademacher-probe",
            TrajectoryKind::ReklPlus => "rekl-plus",
            TrajectoryKind::ReklMinus => "rekl-minus",
        })
    }
}

/// How REKL obtains its normal probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReklProbe {
    /// REKL not computed.
    Off,
    /// Reuse the PAUKL probe η; adds only the `y − εη` trajectory.
    Shared,
    /// Draw a separate η'; adds `y + εη'` and `y − εη'`.
    #[default]
    Independent,
}

/// Which estimators the coupled run must support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledConfig {
    pub epsilon: f64,
    pub pukla: bool,
    pub rekl: ReklProbe,
}

impl CoupledConfig {
    /// PAUKL, PUKLA and REKL (independent probe).
    pub fn all(epsilon: f64) -> Self {
        CoupledConfig {
            epsilon,
            pukla: true,
            rekl: ReklProbe::Independent,
        }
    }

    /// PAUKL only: two reconstructions in total.
    pub fn paukl_only(epsilon: f64) -> Self {
        CoupledConfig {
            epsilon,
            pukla: false,
            rekl: ReklProbe::Off,
        }
    }

    pub fn trajectory_count(&self) -> usize {
        2 + usize::from(self.pukla)
            + match self.rekl {
                ReklProbe::Off => 0,
                ReklProbe::Shared => 1,
                ReklProbe::Independent => 2,
            }
    }
}

/// REKL probe vector as held by a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub enum ReklDirection {
    Off,
    Shared,
    Independent(Vec<f64>),
}

/// Probe vectors, drawn once per run and held fixed across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Probes {
    pub eta: Vec<f64>,
    pub zeta: Option<Vec<f64>>,
    pub rekl: ReklDirection,
}

impl Probes {
    /// Draws η, then ζ (if PUKLA is on), then η' (if REKL is independent),
    /// in that order from `rng`.
    pub fn draw(config: &CoupledConfig, len: usize, rng: &mut RngStream) -> Result<Self> {
        let eta = sample_standard_normal(len, rng)?;
        let zeta = if config.pukla {
            Some(sample_rademacher(len, rng)?)
        } else {
            None
        };
        let rekl = match config.rekl {
            ReklProbe::Off => ReklDirection::Off,
            ReklProbe::Shared => ReklDirection::Shared,
            ReklProbe::Independent => ReklDirection::Independent(sample_standard_normal(len, rng)?),
        };
        Ok(Probes { eta, zeta, rekl })
    }

    /// The normal probe used by REKL, if REKL is enabled.
    pub fn rekl_eta(&self) -> Option<&[f64]> {
        match &self.rekl {
            ReklDirection::Off => None,
            ReklDirection::Shared => Some(&self.eta),
            ReklDirection::Independent(v) => Some(v),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let lens = std::iter::once(self.eta.len())
            .chain(self.zeta.as_ref().map(Vec::len))
            .chain(match &self.rekl {
                ReklDirection::Independent(v) => Some(v.len()),
                _ => None,
            });
        for l in lens {
            if l != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    actual: l,
                });
            }
        }
        Ok(())
    }
}

struct Track<'a> {
    kind: TrajectoryKind,
    problem: EmProblem<'a>,
    state: EmState,
    log_pred: Vec<f64>,
}

impl<'a> Track<'a> {
    fn start(kind: TrajectoryKind, problem: EmProblem<'a>) -> Result<Self> {
        let state = problem.initial_state().map_err(|e| relabel(e, kind))?;
        let log_pred = state.log_prediction();
        Ok(Track {
            kind,
            problem,
            state,
            log_pred,
        })
    }

    fn advance(&mut self) -> Result<()> {
        self.state = em_step(&self.problem, &self.state).map_err(|e| relabel(e, self.kind))?;
        self.log_pred = self.state.log_prediction();
        Ok(())
    }
}

fn relabel(err: Error, kind: TrajectoryKind) -> Error {
    match err {
        Error::NumericalFailure { iteration, .. } => Error::NumericalFailure {
            trajectory: kind,
            iteration,
        },
        Error::Singularity { iteration, .. } if kind != TrajectoryKind::Main => {
            Error::NumericalFailure {
                trajectory: kind,
                iteration,
            }
        }
        other => other,
    }
}

/// Everything the risk estimators need at one iteration.
#[derive(Debug, Clone, Copy)]
pub struct CoupledStep<'s> {
    pub k: usize,
    pub epsilon: f64,
    pub data: &'s [f64],
    pub probes: &'s Probes,
    pub main: &'s EmState,
    pub log_main: &'s [f64],
    pub log_normal: &'s [f64],
    pub log_rademacher: Option<&'s [f64]>,
    pub log_rekl_plus: Option<&'s [f64]>,
    pub log_rekl_minus: Option<&'s [f64]>,
}

/// Final states of a coupled run.
#[derive(Debug, Clone)]
pub struct CoupledTrajectories {
    pub epsilon: f64,
    pub probes: Probes,
    pub main: EmState,
    pub normal: EmState,
    pub rademacher: Option<EmState>,
    pub rekl_plus: Option<EmState>,
    pub rekl_minus: Option<EmState>,
}

/// Draws probes from `rng` and runs the coupled trajectories for `k_max`
/// iterations.
pub fn run_coupled(
    problem: &EmProblem<'_>,
    k_max: usize,
    config: &CoupledConfig,
    rng: &mut RngStream,
    mut observer: impl FnMut(&CoupledStep<'_>),
) -> Result<CoupledTrajectories> {
    let probes = Probes::draw(config, problem.data_len(), rng)?;
    run_coupled_with_probes(problem, k_max, config.epsilon, probes, |s| {
        observer(s);
        ControlFlow::Continue(())
    })
}

/// Coupled run with caller-supplied probes; the observer may stop early.
pub fn run_coupled_with_probes(
    problem: &EmProblem<'_>,
    k_max: usize,
    epsilon: f64,
    probes: Probes,
    mut observer: impl FnMut(&CoupledStep<'_>) -> ControlFlow<()>,
) -> Result<CoupledTrajectories> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    probes.check_len(problem.data_len())?;
    let y = problem.data();
    let shifted = |dir: &[f64], sign: f64| {
        problem.with_perturbed_data(y.iter().zip(dir).map(|(yi, d)| yi + sign * epsilon * d))
    };

    let mut main = Track::start(TrajectoryKind::Main, problem.clone())?;
    let mut normal = Track::start(TrajectoryKind::Normal, shifted(&probes.eta, 1.0))?;
    let mut rademacher = probes
        .zeta
        .as_deref()
        .map(|z| Track::start(TrajectoryKind::Rademacher, shifted(z, 1.0)))
        .transpose()?;
    let mut rekl_plus = match &probes.rekl {
        ReklDirection::Independent(v) => {
            Some(Track::start(TrajectoryKind::ReklPlus, shifted(v, 1.0))?)
        }
        _ => None,
    };
    let mut rekl_minus = probes
        .rekl_eta()
        .map(|v| Track::start(TrajectoryKind::ReklMinus, shifted(v, -1.0)))
        .transpose()?;

    for _ in 0..k_max {
        main.advance()?;
        normal.advance()?;
        for t in [&mut rademacher, &mut rekl_plus, &mut rekl_minus]
            .into_iter()
            .flatten()
        {
            t.advance()?;
        }
        let log_rekl_plus = match probes.rekl {
            ReklDirection::Off => None,
            ReklDirection::Shared => Some(normal.log_pred.as_slice()),
            ReklDirection::Independent(_) => rekl_plus.as_ref().map(|t| t.log_pred.as_slice()),
        };
        let step = CoupledStep {
            k: main.state.k,
            epsilon,
            data: y,
            probes: &probes,
            main: &main.state,
            log_main: &main.log_pred,
            log_normal: &normal.log_pred,
            log_rademacher: rademacher.as_ref().map(|t| t.log_pred.as_slice()),
            log_rekl_plus,
            log_rekl_minus: rekl_minus.as_ref().map(|t| t.log_pred.as_slice()),
        };
        if observer(&step).is_break() {
            break;
        }
    }

    Ok(CoupledTrajectories {
        epsilon,
        main: main.state,
        normal: normal.state,
        rademacher: rademacher.map(|t| t.state),
        rekl_plus: rekl_plus.map(|t| t.state),
        rekl_minus: rekl_minus.map(|t| t.state),
        probes,
    })
}
