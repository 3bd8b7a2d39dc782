//! Goodness of fit of the Poisson sampler against the exact pmf.

use emstop::random::sample_poisson;
use emstop::RngStream;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// Pearson chi-square p-value of `n` draws, pooling tail bins until every
/// expected count is at least 5.
fn chi_square_p(mean: f64, n: usize, seed: u64) -> f64 {
    let pmf = Poisson::new(mean).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let span = (mean + 10.0 * mean.sqrt() + 20.0) as usize;
    let mut counts = vec![0.0; span + 1];
    for _ in 0..n {
        let k = sample_poisson(mean, &mut rng).unwrap() as usize;
        counts[k.min(span)] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=span).map(|k| pmf.pmf(k as u64) * n as f64).collect();
    let covered: f64 = expected[..span].iter().sum();
    expected[span] = n as f64 - covered;

    let (mut bins, mut obs_acc, mut exp_acc) = (Vec::new(), 0.0, 0.0);
    for (o, e) in counts.iter().zip(&expected) {
        obs_acc += o;
        exp_acc += e;
        if exp_acc >= 5.0 {
            bins.push((obs_acc, exp_acc));
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += obs_acc;
        last.1 += exp_acc;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn inversion_regime_fits() {
    for (mean, seed) in [(0.3, 1), (4.0, 2), (29.5, 3)] {
        let p = chi_square_p(mean, 200_000, seed);
        assert!(p > 1e-3, "mean {mean}: p = {p}");
    }
}

#[test]
fn rejection_regime_fits() {
    for (mean, seed) in [(30.0, 4), (100.0, 5), (5000.0, 6)] {
        let p = chi_square_p(mean, 200_000, seed);
        assert!(p > 1e-3, "mean {mean}: p = {p}");
    }
}

#[test]
fn large_mean_moments() {
    let mut rng = RngStream::new(8, 0);
    let n = 200_000;
    let mean = 1e6;
    let xs: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng).unwrap() as f64).collect();
    let m = xs.iter().sum::<f64>() / n as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((m - mean).abs() <= 4.0 * (mean / n as f64).sqrt(), "mean {m}");
    assert!((v / mean - 1.0).abs() <= 0.02, "variance {v}");
}
