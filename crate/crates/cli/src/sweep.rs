use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use emstop::harness::{run_sweep, SweepResult, TrialOutcome};
use emstop::io::{format_real, save_curve_csv};
use emstop::metrics::{Band, Rule};

use crate::simulate::config_sha256;
use crate::{load_config, OutDir, Result};

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
    /// Worker threads; all cores when omitted. Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Runs every realization and writes `summary.csv`, `spr.csv`, `trials.csv`,
/// `manifest.txt` and `curves/trial_NNN.csv`.
pub fn sweep(args: &SweepArgs) -> Result<SweepResult> {
    let (raw, config) = load_config(&args.config)?;
    let result = run_sweep(&config, args.workers)?;
    let dir = args.out.create()?;

    let curves = dir.join("curves");
    fs::create_dir_all(&curves)?;
    for trial in &result.trials {
        if let TrialOutcome::Completed { curve, report } = trial {
            save_curve_csv(&curves.join(format!("trial_{:03}.csv", report.realization)), curve)?;
        }
    }
    fs::write(dir.join("summary.csv"), summary_csv(&result))?;
    fs::write(dir.join("spr.csv"), spr_csv(&result))?;
    fs::write(dir.join("trials.csv"), trials_csv(&result))?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "seed = {}", config.seed);
    let _ = writeln!(manifest, "config_sha256 = {}", config_sha256(&raw));
    let _ = writeln!(manifest, "mode = {}", config.mode);
    let _ = writeln!(manifest, "n_realizations = {}", config.n_realizations);
    let _ = writeln!(manifest, "n_failed = {}", result.n_failed());
    let _ = writeln!(manifest, "k_max = {}", config.k_max);
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    fs::write(dir.join("manifest.txt"), manifest)?;

    Ok(result)
}

pub fn summary_csv(result: &SweepResult) -> String {
    let mut s = String::from("rule,mean_k,std_k,n_failed,n_not_reached\n");
    for row in result.summary() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.rule.name(),
            format_real(row.mean_k),
            format_real(row.std_k),
            row.n_failed,
            row.n_not_reached
        );
    }
    s
}

/// Per-iteration mean and standard deviation of every curve across the
/// completed realizations.
pub fn spr_csv(result: &SweepResult) -> String {
    let agg = &result.aggregate;
    let mut columns: Vec<(&str, &Band)> = vec![("d_kl", &agg.d_kl)];
    for rule in Rule::ALL {
        if let Some(band) = agg.band(rule) {
            let name = match rule {
                Rule::Pe => "spr",
                Rule::ErrKl => "er_kl",
                Rule::ErrL2 => "er_l2",
                Rule::Paukl => "paukl",
                Rule::Pukla => "pukla",
                Rule::Rekl => "rekl",
                Rule::Pdp => "pdp",
            };
            columns.push((name, band));
        }
    }
    let mut s = String::from("k");
    for (name, _) in &columns {
        let _ = write!(s, ",{name}_mean,{name}_std");
    }
    s.push('\n');
    for i in 0..agg.len() {
        let _ = write!(s, "{}", i + 1);
        for (_, band) in &columns {
            let _ = write!(s, ",{},{}", format_real(band.mean[i]), format_real(band.std[i]));
        }
        s.push('\n');
    }
    s
}

/// One row per realization with the stopping iteration of every rule.
pub fn trials_csv(result: &SweepResult) -> String {
    let mut s = String::from("realization,status");
    for rule in Rule::ALL {
        let _ = write!(s, ",{0}_k,{0}_reached", rule.name());
    }
    s.push_str(",discrepancy_crossing\n");
    for (i, trial) in result.trials.iter().enumerate() {
        match trial {
            TrialOutcome::Completed { report, .. } => {
                let _ = write!(s, "{i},completed");
                for rule in Rule::ALL {
                    match report.stop(rule) {
                        Some(stop) => {
                            let _ = write!(s, ",{},{}", stop.k, stop.reached);
                        }
                        None => s.push_str(",,"),
                    }
                }
                let crossing = report.discrepancy_crossing.map(|k| k.to_string());
                let _ = writeln!(s, ",{}", crossing.unwrap_or_default());
            }
            TrialOutcome::Failed(f) => {
                let status = if f.numerical { "numerical_failure" } else { "failed" };
                let _ = write!(s, "{i},{status}");
                s.push_str(&",".repeat(2 * Rule::ALL.len()));
                s.push_str(",\n");
            }
        }
    }
    s
}
