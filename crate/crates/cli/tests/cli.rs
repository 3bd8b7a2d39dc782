//! End-to-end runs of the `emstop` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emstop::em::{run_trajectory, EmProblem};
use emstop::io::{read_curve_csv, read_image, write_text_image};
use emstop::metrics::{argmin_iteration, Rule};
use emstop::operators::convolution_operator;
use emstop::{Dims, Image, Psf};

fn emstop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emstop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = emstop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, mode: &str, n: usize, k_max: usize) -> PathBuf {
    let path = dir.join(format!("{mode}.toml"));
    fs::write(
        &path,
        format!(
            "seed = 7\nmode = \"{mode}\"\npsf_sigma = 2.0\nflux = 100000.0\n\
             background_level = 20.0\nn_realizations = {n}\nk_max = {k_max}\n\n\
             [phantom]\nkind = \"synthetic\"\nwidth = 32\nheight = 32\n"
        ),
    )
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn report_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_owned))
        .unwrap_or_else(|| panic!("{key} missing from report"))
}

#[test]
fn simulate_inverse_crime_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 1, 10);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    for name in ["data.pgm", "psf.txt", "truth.txt", "lambda.txt", "manifest.txt"] {
        assert!(a.join(name).exists(), "{name}");
    }
    assert!(!a.join("psf_exact.txt").exists());
    assert_eq!(files(&a), files(&b));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("config_sha256 = "));
}

#[test]
fn simulate_mismatched_writes_both_psfs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mismatched_psf", 1, 10);
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let psf = fs::read(out.join("psf.txt")).unwrap();
    let exact = fs::read(out.join("psf_exact.txt")).unwrap();
    assert_ne!(psf, exact);
}

#[test]
fn fixed_rule_returns_the_plain_iterate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 1, 10);
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let rec = tmp.path().join("rec");
    ok(&[
        "reconstruct", "--data", s(&sim.join("data.pgm")), "--psf", s(&sim.join("psf.txt")),
        "--background", "20", "--out", s(&rec), "--k-max", "100", "--rule", "fixed", "--seed", "1",
    ]);

    let data = read_image(&sim.join("data.pgm")).unwrap();
    let psf = Psf::new(read_image(&sim.join("psf.txt")).unwrap()).unwrap();
    let op = convolution_operator(&psf, data.dims()).unwrap();
    let background = Image::filled(data.dims(), 20.0).unwrap();
    let problem = EmProblem::new(&op, &data, &background).unwrap();
    let last = run_trajectory(&problem, 100, |_| {}).unwrap();
    let expected = tmp.path().join("expected.txt");
    write_text_image(&expected, &last.x_image(&problem)).unwrap();
    assert_eq!(fs::read(rec.join("recon.txt")).unwrap(), fs::read(expected).unwrap());
    assert_eq!(report_value(&rec, "selected_k"), "100");
    assert_eq!(read_curve_csv(&rec.join("curve.csv"), data.len()).unwrap().len(), 100);
}

#[test]
fn pdp_and_paukl_rules_follow_the_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 1, 10);
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let data = s(&sim.join("data.pgm")).to_owned();
    let psf = s(&sim.join("psf.txt")).to_owned();
    let m = 32 * 32;

    let pdp = tmp.path().join("pdp");
    ok(&[
        "reconstruct", "--data", &data, "--psf", &psf, "--background", "20", "--out", s(&pdp),
        "--k-max", "150", "--rule", "pdp", "--seed", "3", "--checkpoint-stride", "1",
    ]);
    let curve = read_curve_csv(&pdp.join("curve.csv"), m).unwrap();
    let first = curve.d_kl().iter().position(|&d| d < m as f64 / 2.0).unwrap() + 1;
    assert_eq!(report_value(&pdp, "selected_k"), first.to_string());
    assert_eq!(
        fs::read(pdp.join("recon.txt")).unwrap(),
        fs::read(pdp.join(format!("checkpoints/x_{first:06}.txt"))).unwrap()
    );

    let paukl = tmp.path().join("paukl");
    ok(&[
        "reconstruct", "--data", &data, "--psf", &psf, "--background", "20", "--out", s(&paukl),
        "--k-max", "150", "--rule", "paukl", "--seed", "3", "--checkpoint-stride", "1",
    ]);
    let curve = read_curve_csv(&paukl.join("curve.csv"), m).unwrap();
    let k = argmin_iteration(&curve.series(Rule::Paukl).unwrap()).unwrap().k;
    assert_eq!(report_value(&paukl, "selected_k"), k.to_string());
    assert_eq!(
        fs::read(paukl.join("recon.txt")).unwrap(),
        fs::read(paukl.join(format!("checkpoints/x_{k:06}.txt"))).unwrap()
    );
}

#[test]
fn online_stop_agrees_with_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 1, 10);
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let common = |out: &Path, online: bool| {
        let mut args = vec![
            "reconstruct".to_owned(), "--data".into(), s(&sim.join("data.pgm")).into(),
            "--psf".into(), s(&sim.join("psf.txt")).into(), "--background".into(), "20".into(),
            "--out".into(), s(out).into(), "--k-max".into(), "400".into(), "--seed".into(), "5".into(),
        ];
        if online {
            args.push("--online".into());
        }
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    };
    let full = tmp.path().join("full");
    let online = tmp.path().join("online");
    common(&full, false);
    common(&online, true);
    let k_full = report_value(&full, "selected_k");
    assert_eq!(report_value(&online, "selected_k"), k_full);
    let ran: usize = report_value(&online, "iterations").parse().unwrap();
    assert!(ran < 400);
    assert_eq!(fs::read(full.join("recon.txt")).unwrap(), fs::read(online.join("recon.txt")).unwrap());
}

#[test]
fn reconstruct_matches_sweep_realization_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 2, 40);
    let sim = tmp.path().join("sim");
    let sweep = tmp.path().join("sweep");
    let rec = tmp.path().join("rec");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    ok(&["sweep", "--config", s(&cfg), "--out", s(&sweep), "--workers", "1"]);
    ok(&[
        "reconstruct", "--data", s(&sim.join("data.pgm")), "--psf", s(&sim.join("psf.txt")),
        "--background", "20", "--out", s(&rec), "--k-max", "40", "--seed", "7",
        "--truth", s(&sim.join("truth.txt")), "--lambda", s(&sim.join("lambda.txt")),
    ]);
    assert_eq!(
        fs::read(rec.join("curve.csv")).unwrap(),
        fs::read(sweep.join("curves/trial_000.csv")).unwrap()
    );
}

#[test]
fn sweep_output_is_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "inverse_crime", 4, 50);
    let one = tmp.path().join("one");
    let eight = tmp.path().join("eight");
    ok(&["sweep", "--config", s(&cfg), "--out", s(&one), "--workers", "1"]);
    ok(&["sweep", "--config", s(&cfg), "--out", s(&eight), "--workers", "8"]);
    assert_eq!(files(&one), files(&eight));

    let summary = fs::read_to_string(one.join("summary.csv")).unwrap();
    let rules: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rules, ["PE", "PAUKL", "PUKLA", "REKL", "PDP", "err_KL", "err_l2"]);
    assert!(summary.starts_with("rule,mean_k,std_k,n_failed"));
    let curves = fs::read_dir(one.join("curves")).unwrap().count();
    assert_eq!(curves, 4);
    let spr = fs::read_to_string(one.join("spr.csv")).unwrap();
    assert_eq!(spr.lines().count(), 51);
    assert!(spr.lines().next().unwrap().contains("spr_mean"));
}

#[test]
fn validate_checks_pass() {
    for check in ["half-m", "adjoint", "homogeneity"] {
        let out = ok(&["validate", "--check", check, "--seed", "3"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("PASS"), "{text}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(emstop(&["sweep", "--config", s(&missing), "--out", s(tmp.path())]).status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "mode = \"inverse_crime\"\n").unwrap();
    assert_eq!(emstop(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]).status.code(), Some(1));

    // A PSF larger than the data grid.
    let small = tmp.path().join("small.txt");
    write_text_image(&small, &Image::filled(Dims::new(4, 4), 3.0).unwrap()).unwrap();
    let big = tmp.path().join("big.txt");
    write_text_image(&big, &Image::filled(Dims::new(8, 8), 1.0).unwrap()).unwrap();
    let out = emstop(&[
        "reconstruct", "--data", s(&small), "--psf", s(&big), "--background", "1",
        "--out", s(&tmp.path().join("r")), "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    // Counts near the largest double overflow the transforms.
    let huge = tmp.path().join("huge.txt");
    write_text_image(&huge, &Image::filled(Dims::new(8, 8), 1e307).unwrap()).unwrap();
    let psf = tmp.path().join("psf.txt");
    write_text_image(&psf, &Image::filled(Dims::new(3, 3), 1.0).unwrap()).unwrap();
    let out = emstop(&[
        "reconstruct", "--data", s(&huge), "--psf", s(&psf), "--background", "0",
        "--out", s(&tmp.path().join("z")), "--seed", "1", "--k-max", "10",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
