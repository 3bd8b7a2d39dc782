use std::fmt;

use clap::ValueEnum;
use emstop::em::{run_trajectory, EmProblem};
use emstop::harness::{lemma5_demo, Lemma5Config};
use emstop::operators::{convolution_operator, dense_operator, gaussian_psf};
use emstop::random::sample_poisson_image;
use emstop::risk::{half_m_identity_check, stein_lemma_check, LogTotalCount};
use emstop::{Dims, ForwardOperator, Image, Psf, RngStream};

use crate::Result;

/// Numerical self-checks with fixed tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    /// Stein's identity for Poisson vectors and its shrinking gap.
    Stein,
    /// `E[Σ Y log(Y/λ)] = M/2` at large `λ`.
    HalfM,
    /// FFT convolution against a dense matrix, and the adjoint identity.
    Adjoint,
    /// `R_k(10y) = 10 R_k(y)` at zero background.
    Homogeneity,
    /// Discrepancy scaling and the unreachable-discrepancy demonstration.
    Lemma5,
}

/// Outcome of one check: pass/fail plus observed-vs-expected lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check {}: {}", self.name, if self.passed { "PASS" } else { "FAIL" })?;
        for line in &self.lines {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

struct Builder {
    name: &'static str,
    passed: bool,
    lines: Vec<String>,
}

impl Builder {
    fn new(name: &'static str) -> Self {
        Builder {
            name,
            passed: true,
            lines: Vec::new(),
        }
    }

    fn item(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    fn finish(self) -> CheckReport {
        CheckReport {
            name: self.name,
            passed: self.passed,
            lines: self.lines,
        }
    }
}

pub fn validate(check: Check, seed: u64) -> Result<CheckReport> {
    Ok(match check {
        Check::Stein => stein(seed)?,
        Check::HalfM => half_m(seed)?,
        Check::Adjoint => adjoint(seed)?,
        Check::Homogeneity => homogeneity(seed)?,
        Check::Lemma5 => lemma5()?,
    })
}

const STEIN_DIM: usize = 16;
const STEIN_DRAWS: usize = 1_000_000;

fn stein(seed: u64) -> Result<CheckReport> {
    let mut b = Builder::new("stein");
    let f = LogTotalCount {
        dim: STEIN_DIM,
        offset: 1.0,
    };
    let base = vec![100.0; STEIN_DIM];
    let scaled = vec![1600.0; STEIN_DIM];
    let c1 = stein_lemma_check(&f, &base, STEIN_DRAWS, &mut RngStream::new(seed, 0))?;
    let c16 = stein_lemma_check(&f, &scaled, STEIN_DRAWS, &mut RngStream::new(seed, 1))?;
    for (label, c) in [("lambda = 100", &c1), ("lambda = 1600", &c16)] {
        let worst = (0..STEIN_DIM)
            .max_by(|&i, &j| c.gap(i).abs().total_cmp(&c.gap(j).abs()))
            .expect("non-empty");
        let tol = (3.0_f64 * c.stderr[worst]).max(0.5 / c.lambda_norm.sqrt());
        b.item(
            c.within_tolerance(),
            format!(
                "{label}: max |E[(Y_i - l_i) f] - E[Y_i d_i f]| = {:.3e} at i = {worst}, tolerance {:.3e}",
                c.gap(worst).abs(),
                tol
            ),
        );
        b.note(format!(
            "{label}: coordinate-averaged gap {:.3e} +- {:.1e}",
            c.mean_gap, c.mean_gap_stderr
        ));
    }
    let (g1, s1, g16, s16) = (c1.mean_gap, c1.mean_gap_stderr, c16.mean_gap, c16.mean_gap_stderr);
    let margin = 3.0 * s1.hypot(s16);
    b.item(
        g1 - g16 > margin,
        format!("gap shrinks under x16 scaling: g1 - g16 = {:.3e}, expected > {margin:.3e}", g1 - g16),
    );
    b.item(
        g16 <= g1 / 4.0 + 3.0 * s16,
        format!(
            "gap at x16 = {g16:.3e}, expected <= g1/4 + 3 se = {:.3e}",
            g1 / 4.0 + 3.0 * s16
        ),
    );
    Ok(b.finish())
}

fn half_m(seed: u64) -> Result<CheckReport> {
    let mut b = Builder::new("half-m");
    let lambda = vec![100.0; 64];
    let c = half_m_identity_check(&lambda, 100_000, &mut RngStream::new(seed, 0))?;
    let m = c.m as f64;
    b.item(
        c.within_tolerance(),
        format!(
            "E[sum Y log(Y/l)] = {:.4} +- {:.4}, expected {} within {:.4}",
            c.estimate,
            c.stderr,
            m / 2.0,
            (3.0_f64 * c.stderr).max(0.02 * m)
        ),
    );
    Ok(b.finish())
}

const ADJOINT_TOL: f64 = 1e-10;

/// Circular convolution written out as a matrix, entry by entry.
fn circulant_rows(psf: &Psf, dims: Dims) -> Vec<Vec<f64>> {
    let (cx, cy) = psf.center();
    let pd = psf.dims();
    let mut rows = vec![vec![0.0; dims.len()]; dims.len()];
    for oy in 0..dims.height {
        for ox in 0..dims.width {
            let row = &mut rows[dims.index(ox, oy)];
            for py in 0..pd.height {
                for px in 0..pd.width {
                    let ix = (ox + cx + dims.width * pd.width - px) % dims.width;
                    let iy = (oy + cy + dims.height * pd.height - py) % dims.height;
                    row[dims.index(ix, iy)] += psf.image().get(px, py);
                }
            }
        }
    }
    rows
}

fn random_image(dims: Dims, rng: &mut RngStream) -> Result<Image> {
    Ok(Image::new(dims, (0..dims.len()).map(|_| rng.uniform()).collect())?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn adjoint(seed: u64) -> Result<CheckReport> {
    let mut b = Builder::new("adjoint");
    let dims = Dims::new(8, 8);
    let mut rng = RngStream::new(seed, 0);
    let mut worst_forward = 0.0_f64;
    let mut worst_adjoint = 0.0_f64;
    for t in 0..10 {
        let side = 3 + t % 6;
        let psf = Psf::normalized(random_image(Dims::new(side, side), &mut rng)?)?;
        let fft = convolution_operator(&psf, dims)?;
        let dense = dense_operator(&circulant_rows(&psf, dims))?.with_dims(dims, dims)?;
        let x = random_image(dims, &mut rng)?;
        worst_forward = worst_forward.max(max_rel_diff(
            fft.apply(&x)?.values(),
            dense.apply(&x)?.values(),
        ));
        worst_adjoint = worst_adjoint.max(max_rel_diff(
            fft.apply_adjoint(&x)?.values(),
            dense.apply_adjoint(&x)?.values(),
        ));
    }
    b.item(
        worst_forward <= ADJOINT_TOL,
        format!("FFT vs dense forward, 10 PSFs: max relative difference {worst_forward:.2e}, expected <= {ADJOINT_TOL:.0e}"),
    );
    b.item(
        worst_adjoint <= ADJOINT_TOL,
        format!("FFT vs dense adjoint, 10 PSFs: max relative difference {worst_adjoint:.2e}, expected <= {ADJOINT_TOL:.0e}"),
    );

    let op = convolution_operator(&gaussian_psf(Dims::new(5, 5), 1.3)?, dims)?;
    let mut worst_pair = 0.0_f64;
    for _ in 0..100 {
        let x = random_image(dims, &mut rng)?;
        let y = random_image(dims, &mut rng)?;
        let lhs = dot(op.apply(&x)?.values(), y.values());
        let rhs = dot(x.values(), op.apply_adjoint(&y)?.values());
        worst_pair = worst_pair.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    b.item(
        worst_pair <= ADJOINT_TOL,
        format!("<Hx, y> = <x, H^T y> over 100 pairs: max relative difference {worst_pair:.2e}, expected <= {ADJOINT_TOL:.0e}"),
    );
    Ok(b.finish())
}

const HOMOGENEITY_TOL: f64 = 1e-10;

fn homogeneity(seed: u64) -> Result<CheckReport> {
    let mut b = Builder::new("homogeneity");
    let dims = Dims::new(32, 32);
    let op = convolution_operator(&gaussian_psf(dims, 2.0)?, dims)?;
    let mean = Image::filled(dims, 50.0)?;
    let y = sample_poisson_image(&mean, &mut RngStream::new(seed, 0))?;
    let zero = Image::zeros(dims);
    let problem = EmProblem::new_relaxed(&op, &y, &zero)?;
    let scaled = problem.with_scaled_data(10.0);
    let k_max = 100;
    let mut base = Vec::with_capacity(k_max);
    run_trajectory(&problem, k_max, |s| base.push(s.x().to_vec()))?;
    let mut worst = 0.0_f64;
    let mut k = 0;
    run_trajectory(&scaled, k_max, |s| {
        let expected: Vec<f64> = base[k].iter().map(|v| 10.0 * v).collect();
        worst = worst.max(max_rel_diff(s.x(), &expected));
        k += 1;
    })?;
    b.item(
        worst <= HOMOGENEITY_TOL,
        format!("max_k |R_k(10y) - 10 R_k(y)| / |10 R_k(y)| over k <= {k_max}: {worst:.2e}, expected <= {HOMOGENEITY_TOL:.0e}"),
    );
    Ok(b.finish())
}

const SCALING_TOL: f64 = 1e-8;

fn lemma5() -> Result<CheckReport> {
    let mut b = Builder::new("lemma5");
    let off_cone = lemma5_demo(&Lemma5Config::default())?;
    let half = off_cone.m as f64 / 2.0;
    b.note(format!(
        "M/2 = {half}, min d_KL(y) = {:.4}, critical scale {:.3}",
        off_cone.base_min_d_kl, off_cone.critical_scale
    ));
    for r in &off_cone.rows {
        b.note(format!(
            "L = {}: min d_KL = {:.4e}, crossing {}",
            r.scale,
            r.min_d_kl,
            r.crossing.map_or("never".to_owned(), |k| format!("at k = {k}"))
        ));
    }
    let err = off_cone.max_scaling_error();
    b.item(
        err <= SCALING_TOL,
        format!("d_KL(k, Ly) = L d_KL(k, y): max relative error {err:.2e}, expected <= {SCALING_TOL:.0e}"),
    );
    b.item(
        off_cone.rows.iter().any(|r| r.crossing.is_none() && r.min_d_kl > half),
        "off-cone data: some scale never reaches M/2".to_owned(),
    );
    b.item(
        off_cone.rows.iter().any(|r| r.crossing.is_some()),
        "off-cone data: the smallest scales still reach M/2".to_owned(),
    );
    let feasible = lemma5_demo(&Lemma5Config {
        modulation: 0.0,
        ..Lemma5Config::default()
    })?;
    let crossings: Vec<String> = feasible
        .rows
        .iter()
        .map(|r| r.crossing.map_or("never".to_owned(), |k| k.to_string()))
        .collect();
    b.item(
        feasible.rows.iter().all(|r| r.crossing.is_some()),
        format!("feasible data reaches M/2 at every scale: crossings [{}]", crossings.join(", ")),
    );
    Ok(b.finish())
}
