use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use emstop::em::{
    run_coupled_with_probes, CoupledConfig, EmProblem, Probes, DEFAULT_EPSILON, DEFAULT_K_MAX,
};
use emstop::harness::{probe_stream, TrialReport};
use emstop::io::{read_image, save_curve_csv, write_text_image, CheckpointWriter};
use emstop::metrics::{OnlineArgmin, OracleSample, RiskCurve, Rule, Stop, DEFAULT_PATIENCE};
use emstop::operators::convolution_operator;
use emstop::risk::RiskSample;
use emstop::{ForwardOperator, Image, Psf, RngStream};

use crate::{CliError, OutDir, ReklProbeArg, Result};

/// Iteration selection for the written reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopRule {
    /// Minimum of the PAUKL curve.
    Paukl,
    /// Minimum of the PUKLA curve.
    Pukla,
    /// Minimum of the REKL curve.
    Rekl,
    /// First iteration with `d_KL < M/2`.
    Pdp,
    /// The last iteration, `k_max`.
    Fixed,
}

impl StopRule {
    fn rule(self) -> Option<Rule> {
        match self {
            StopRule::Paukl => Some(Rule::Paukl),
            StopRule::Pukla => Some(Rule::Pukla),
            StopRule::Rekl => Some(Rule::Rekl),
            StopRule::Pdp => Some(Rule::Pdp),
            StopRule::Fixed => None,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct ReconstructArgs {
    /// Count data image (P-TXT or PGM).
    #[arg(long)]
    pub data: PathBuf,
    /// PSF image; normalized to unit sum unless it already sums to one.
    #[arg(long)]
    pub psf: PathBuf,
    /// Background: a constant level or an image file.
    #[arg(long)]
    pub background: String,
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    pub k_max: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = StopRule::Paukl)]
    pub rule: StopRule,
    /// Seed of the Monte-Carlo probes. With the seed of a simulation config
    /// the probes match those of realization 0 in a sweep.
    #[arg(long)]
    pub seed: u64,
    /// True object; adds the PE, err_KL and err_l2 columns.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// True mean `λ`; defaults to `H x_true + b` when `--truth` is given.
    #[arg(long, requires = "truth")]
    pub lambda: Option<PathBuf>,
    /// Write `x_k` to `checkpoints/` every this many iterations.
    #[arg(long)]
    pub checkpoint_stride: Option<usize>,
    /// Stop as soon as the selected rule has decided: the PDP crossing, or
    /// an estimator minimum without improvement for 50 iterations.
    #[arg(long)]
    pub online: bool,
    #[arg(long, value_enum, default_value_t = ReklProbeArg::Independent)]
    pub rekl_probe: ReklProbeArg,
}

/// What `reconstruct` selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSummary {
    pub rule: StopRule,
    pub selected: Stop,
    /// Iterations actually run.
    pub iterations: usize,
    pub report: TrialReport,
}

/// Reads an image, naming the file in the error.
fn load_image(path: &Path) -> Result<Image> {
    read_image(path).map_err(|e| match e {
        emstop::Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn load_background(spec: &str, like: &Image) -> Result<Image> {
    match spec.parse::<f64>() {
        Ok(level) => Ok(Image::filled(like.dims(), level)?),
        Err(_) => load_image(Path::new(spec)),
    }
}

fn load_psf(path: &Path) -> Result<Psf> {
    let image = load_image(path)?;
    // Keep an already normalized PSF bit-for-bit.
    Ok(Psf::new(image.clone()).or_else(|_| Psf::normalized(image))?)
}

/// Tracks the selected iterate while the coupled run advances.
struct Selector {
    rule: StopRule,
    online: Option<OnlineArgmin>,
    best: Option<(usize, f64)>,
    crossed: bool,
    x: Option<Image>,
}

impl Selector {
    /// Returns whether the run may stop here.
    fn observe(&mut self, sample: &RiskSample, x: impl FnOnce() -> Image) -> bool {
        let value = match self.rule {
            StopRule::Paukl => sample.paukl,
            StopRule::Pukla => sample.pukla,
            StopRule::Rekl => sample.rekl,
            StopRule::Pdp => sample.pdp,
            StopRule::Fixed => {
                self.x = Some(x());
                return false;
            }
        };
        if self.rule == StopRule::Pdp {
            if self.crossed {
                return false;
            }
            if sample.discrepancy_satisfied() {
                self.crossed = true;
                self.x = Some(x());
                return self.online.is_some();
            }
        }
        if self.best.is_none_or(|(_, b)| value < b) {
            self.best = Some((sample.k, value));
            self.x = Some(x());
        }
        match &mut self.online {
            Some(o) if self.rule != StopRule::Pdp => o.push(sample.k, value),
            _ => false,
        }
    }
}

/// Runs coupled EM on the given data and writes `recon.txt`, `curve.csv` and
/// `report.txt`.
pub fn reconstruct(args: &ReconstructArgs) -> Result<ReconstructSummary> {
    if args.k_max == 0 {
        return Err(CliError::Usage("--k-max must be >= 1".into()));
    }
    let data = load_image(&args.data)?;
    let psf = load_psf(&args.psf)?;
    let background = load_background(&args.background, &data)?;
    let operator = convolution_operator(&psf, data.dims())?;
    let problem = EmProblem::new_relaxed(&operator, &data, &background)?;

    let truth = args.truth.as_deref().map(load_image).transpose()?;
    let lambda = match (&truth, &args.lambda) {
        (Some(_), Some(path)) => Some(load_image(path)?),
        (Some(x), None) => {
            let hx = operator.apply(x)?;
            let values = hx.values().iter().zip(background.values()).map(|(a, b)| a + b);
            Some(Image::new(hx.dims(), values.collect())?)
        }
        (None, _) => None,
    };
    if let (Some(x), Some(l)) = (&truth, &lambda) {
        if x.dims() != data.dims() || l.dims() != data.dims() {
            return Err(emstop::Error::DimensionMismatch(format!(
                "truth {} and lambda {} must match data {}",
                x.dims(),
                l.dims(),
                data.dims()
            ))
            .into());
        }
    }

    let dir = args.out.create()?;
    let mut checkpoints = args
        .checkpoint_stride
        .map(|s| CheckpointWriter::new(dir.join("checkpoints"), s))
        .transpose()?;

    let coupled = CoupledConfig {
        epsilon: args.epsilon,
        pukla: true,
        rekl: args.rekl_probe.into(),
    };
    let mut rng = RngStream::new(args.seed, probe_stream(0));
    let probes = Probes::draw(&coupled, problem.data_len(), &mut rng)?;

    let mut curve = RiskCurve::new(truth.is_some());
    let mut selector = Selector {
        rule: args.rule,
        online: (args.online && args.rule != StopRule::Fixed)
            .then(|| OnlineArgmin::new(DEFAULT_PATIENCE)),
        best: None,
        crossed: false,
        x: None,
    };
    let mut failure = None;
    run_coupled_with_probes(&problem, args.k_max, args.epsilon, probes, |step| {
        let result = (|| -> emstop::Result<bool> {
            let sample = RiskSample::from_step(step)?;
            let oracle = match (&truth, &lambda) {
                (Some(x), Some(l)) => Some(OracleSample::compute(
                    l.values(),
                    step.main.prediction(),
                    x.values(),
                    step.main.x(),
                )?),
                _ => None,
            };
            curve.push(sample, oracle)?;
            if let Some(c) = checkpoints.as_mut() {
                c.observe(step.k, &step.main.x_image(&problem))?;
            }
            Ok(selector.observe(&sample, || step.main.x_image(&problem)))
        })();
        match result {
            Ok(false) => ControlFlow::Continue(()),
            Ok(true) => ControlFlow::Break(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }

    let report = TrialReport::from_curve(0, &curve)?;
    let iterations = curve.len();
    let selected = match args.rule.rule() {
        None => Stop {
            k: iterations,
            value: curve.samples()[iterations - 1].d_kl,
            reached: true,
        },
        Some(rule) => {
            let full = report.stop(rule).expect("estimator curves are always present");
            match &selector.online {
                Some(o) => o.stop().map_or(full, |s| Stop {
                    k: full.k,
                    value: full.value,
                    reached: s.reached,
                }),
                None => full,
            }
        }
    };
    let x = selector.x.expect("at least one iteration ran");

    write_text_image(&dir.join("recon.txt"), &x)?;
    save_curve_csv(&dir.join("curve.csv"), &curve)?;
    fs::write(dir.join("report.txt"), render_report(args, &report, &selected, iterations, data.len()))?;
    Ok(ReconstructSummary {
        rule: args.rule,
        selected,
        iterations,
        report,
    })
}

fn render_report(
    args: &ReconstructArgs,
    report: &TrialReport,
    selected: &Stop,
    iterations: usize,
    m: usize,
) -> String {
    let flag = |reached: bool| if reached { "reached" } else { "not reached" };
    let mut s = String::new();
    if let Some(v) = args.rule.to_possible_value() {
        let _ = writeln!(s, "rule = {}", v.get_name());
    }
    let _ = writeln!(s, "selected_k = {}", selected.k);
    let _ = writeln!(s, "selected_status = {}", flag(selected.reached));
    let _ = writeln!(s, "iterations = {iterations}");
    let _ = writeln!(s, "k_max = {}", args.k_max);
    let _ = writeln!(s, "M = {m}");
    let _ = writeln!(s, "half_M = {}", m as f64 / 2.0);
    let _ = writeln!(s, "epsilon = {}", args.epsilon);
    let _ = writeln!(s, "seed = {}", args.seed);
    match report.discrepancy_crossing {
        Some(k) => {
            let _ = writeln!(s, "discrepancy_crossing = {k}");
        }
        None => {
            let _ = writeln!(s, "discrepancy_crossing = not reached");
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<8} {:>8} {:>24} status", "rule", "k", "value");
    for (rule, stop) in &report.stops {
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>24.16e} {}",
            rule.name(),
            stop.k,
            stop.value,
            flag(stop.reached)
        );
    }
    s
}
