use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn dlr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlr")).current_dir(dir).args(args).output().expect("run dlr")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dlr(dir, args);
    assert!(out.status.success(), "dlr {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Data rows of CSV text, skipping the header and any lines before it.
fn csv_rows(text: &str, header: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip_while(|l| *l != header)
        .skip(1)
        .take_while(|l| l.contains(','))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn coeffs(path: &Path) -> Vec<f64> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["coeffs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn residual(stdout: &str) -> f64 {
    stdout.lines().find_map(|l| l.strip_prefix("residual = ")).unwrap().parse().unwrap()
}

fn setup(lambda: &str, eps: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build", "--lambda", lambda, "--eps", eps, "--out", "basis.json"]);
    let p = dir.path().to_path_buf();
    (dir, p)
}

#[test]
fn build_prints_rank_and_node_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["build", "--lambda", "100", "--eps", "1e-6"]);
    let r: usize = out.lines().next().unwrap().strip_prefix("r = ").unwrap().parse().unwrap();
    assert!(r.abs_diff(21) <= 3, "r = {r}");
    let rows = csv_rows(&out, "k,omega,tau,n");
    assert_eq!(rows.len(), r);
    assert!(rows.iter().all(|row| row[1].abs() <= 100.0 && (0.0..=1.0).contains(&row[2])));

    // The same basis in physical units: τ scaled by β, ω divided by β.
    let phys = ok(dir.path(), &["build", "--beta", "10", "--omega-max", "10", "--eps", "1e-6"]);
    let prow = csv_rows(&phys, "k,omega,tau,n");
    for (a, b) in rows.iter().zip(&prow) {
        assert!((b[2] - 10.0 * a[2]).abs() <= 1e-12 && (b[1] - a[1] / 10.0).abs() <= 1e-12);
        assert_eq!(a[3], b[3]);
    }
}

#[test]
fn build_small_and_large_cutoffs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build", "--lambda", "1"]);
    let start = Instant::now();
    ok(dir.path(), &["build", "--lambda", "1e6", "--eps", "1e-14", "--out", "big.json"]);
    assert!(start.elapsed().as_secs_f64() < 5.0, "{:?}", start.elapsed());
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&dlr(dir.path(), &["build", "--lambda", "0.5"])), 2);
    assert_eq!(code(&dlr(dir.path(), &["build", "--lambda", "10", "--eps", "2"])), 2);
    assert_eq!(code(&dlr(dir.path(), &["build", "--omega-max", "1"])), 2);
    assert_eq!(code(&dlr(dir.path(), &["fit", "--basis", "missing.json", "--samples", "x.csv", "--out", "e.json"])), 2);
    assert_eq!(code(&dlr(dir.path(), &["frobnicate"])), 2);
    let threads = Command::new(env!("CARGO_BIN_EXE_dlr"))
        .env("DLR_THREADS", "many")
        .args(["grid", "--lambda", "10"])
        .output()
        .unwrap();
    assert_eq!(code(&threads), 2);
}

#[test]
fn constant_samples_fit_to_constant() {
    let (_d, dir) = setup("100", "1e-10");
    let nodes = csv_rows(&ok(&dir, &["build", "--lambda", "100", "--eps", "1e-10"]), "k,omega,tau,n");
    let mut csv = String::from("tau,value\n");
    for row in &nodes {
        csv += &format!("{:e},-0.5\n", row[2]);
    }
    std::fs::write(dir.join("half.csv"), csv).unwrap();
    let fit = ok(&dir, &["fit", "--basis", "basis.json", "--samples", "half.csv", "--out", "half.json"]);
    assert!(residual(&fit) <= 1e-13);
    let vals = csv_rows(
        &ok(&dir, &["eval", "--basis", "basis.json", "--expansion", "half.json", "--count", "101"]),
        "tau,value",
    );
    assert_eq!(vals.len(), 101);
    assert!(vals.iter().all(|v| (v[1] + 0.5).abs() <= 1e-10), "{vals:?}");
}

#[test]
fn semicircle_pipeline_round_trip() {
    let (_d, dir) = setup("100", "1e-12");
    let samples = ok(&dir, &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json"]);
    std::fs::write(dir.join("s.csv"), &samples).unwrap();
    let fit = ok(&dir, &["fit", "--basis", "basis.json", "--samples", "s.csv", "--out", "e.json"]);
    assert!(residual(&fit) <= 1e-13, "{fit}");

    // Evaluating at the nodes reproduces the samples.
    let at_nodes = ok(&dir, &["eval", "--basis", "basis.json", "--expansion", "e.json", "--out", "again.csv"]);
    assert!(at_nodes.is_empty());
    let a = csv_rows(&samples, "tau,value");
    let b = csv_rows(&std::fs::read_to_string(dir.join("again.csv")).unwrap(), "tau,value");
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        assert!((x[1] - y[1]).abs() <= 1e-12);
    }

    // Refit from the evaluated values: the fitted values agree.
    let refit = ok(&dir, &["fit", "--basis", "basis.json", "--samples", "again.csv", "--out", "e2.json"]);
    assert!(residual(&refit) <= 1e-13);
    ok(&dir, &["eval", "--basis", "basis.json", "--expansion", "e2.json", "--out", "third.csv"]);
    let c = csv_rows(&std::fs::read_to_string(dir.join("third.csv")).unwrap(), "tau,value");
    assert!(a.iter().zip(&c).all(|(x, y)| (x[1] - y[1]).abs() <= 1e-12));

    // Same route through Matsubara samples.
    let m = ok(
        &dir,
        &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json", "--sampling", "matsubara"],
    );
    std::fs::write(dir.join("m.csv"), &m).unwrap();
    let fit =
        dlr(&dir, &["fit", "--basis", "basis.json", "--samples", "m.csv", "--domain", "matsubara", "--out", "em.json"]);
    assert!(fit.status.success());
    assert!(fit.stderr.is_empty(), "{}", String::from_utf8_lossy(&fit.stderr));
    let mvals = csv_rows(
        &ok(&dir, &["eval", "--basis", "basis.json", "--expansion", "em.json", "--domain", "matsubara"]),
        "n,re,im",
    );
    for (x, y) in csv_rows(&m, "n,re,im").iter().zip(&mvals) {
        assert_eq!(x[0], y[0]);
        assert!((x[1] - y[1]).abs() <= 1e-12 && (x[2] - y[2]).abs() <= 1e-12);
    }
}

#[test]
fn round_trip_reproduces_coefficients() {
    let (_d, dir) = setup("100", "1e-12");
    let samples = ok(&dir, &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json"]);
    std::fs::write(dir.join("s.csv"), &samples).unwrap();
    ok(&dir, &["fit", "--basis", "basis.json", "--samples", "s.csv", "--out", "e.json"]);
    ok(&dir, &["eval", "--basis", "basis.json", "--expansion", "e.json", "--out", "again.csv"]);
    ok(&dir, &["fit", "--basis", "basis.json", "--samples", "again.csv", "--out", "e2.json"]);
    let (c1, c2) = (coeffs(&dir.join("e.json")), coeffs(&dir.join("e2.json")));
    let d = c1.iter().zip(&c2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-12, "max |ĝ - ĝ'| = {d:e}");
}

#[test]
fn matsubara_range_is_conjugate_symmetric() {
    let (_d, dir) = setup("100", "1e-10");
    let s = ok(
        &dir,
        &["bench", "--case", "two-pole", "--beta", "100", "--samples-for", "basis.json", "--sampling", "matsubara"],
    );
    std::fs::write(dir.join("m.csv"), s).unwrap();
    ok(&dir, &["fit", "--basis", "basis.json", "--samples", "m.csv", "--domain", "matsubara", "--out", "e.json"]);
    let rows = csv_rows(
        &ok(
            &dir,
            &[
                "eval",
                "--basis",
                "basis.json",
                "--expansion",
                "e.json",
                "--domain",
                "matsubara",
                "--n-min",
                "-50",
                "--n-max",
                "49",
            ],
        ),
        "n,re,im",
    );
    assert_eq!(rows.len(), 100);
    for k in 0..50 {
        let (a, b) = (&rows[k], &rows[99 - k]);
        assert_eq!(a[0] as i64, -(b[0] as i64) - 1);
        assert_eq!((a[1], a[2]), (b[1], -b[2]));
    }
}

#[test]
fn physical_units_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let beta = "20";
    ok(d, &["build", "--beta", beta, "--omega-max", "5", "--eps", "1e-12", "--out", "basis.json"]);
    // Free level at ε₀ = 0.7: G(τ) = -e^{-ε₀τ}/(1 + e^{-βε₀}) in physical units.
    ok(
        d,
        &["dyson", "--basis", "basis.json", "--e0", "0.7", "--e1", "0", "--v", "0", "--beta", beta, "--out", "g.json"],
    );
    let vals = csv_rows(
        &ok(d, &["eval", "--basis", "basis.json", "--expansion", "g.json", "--beta", beta, "--count", "11"]),
        "tau,value",
    );
    assert!((vals[10][0] - 20.0).abs() <= 1e-12);
    for v in &vals {
        let exact = -(-0.7 * v[0]).exp() / (1.0 + (-14.0f64).exp());
        assert!((v[1] - exact).abs() <= 1e-11, "τ = {}: {} vs {exact}", v[0], v[1]);
    }
    // Physical Matsubara values are β times the dimensionless ones: 1/(iν - ε₀).
    let m = csv_rows(
        &ok(
            d,
            &[
                "eval",
                "--basis",
                "basis.json",
                "--expansion",
                "g.json",
                "--beta",
                beta,
                "--domain",
                "matsubara",
                "--n-min",
                "0",
                "--n-max",
                "3",
            ],
        ),
        "n,re,im",
    );
    for row in &m {
        let nu = (2.0 * row[0] + 1.0) * std::f64::consts::PI / 20.0;
        let (re, im) = (-0.7 / (nu * nu + 0.49), -nu / (nu * nu + 0.49));
        assert!((row[1] - re).abs() <= 1e-10 && (row[2] - im).abs() <= 1e-10, "{row:?}");
    }
}

#[test]
fn fit_rejects_mismatched_nodes_and_counts() {
    let (_d, dir) = setup("100", "1e-8");
    let s = ok(&dir, &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json"]);
    let mut lines: Vec<String> = s.lines().map(String::from).collect();

    // Shift one τ by 1e-11, beyond the node tolerance.
    let (t, v) = lines[3].split_once(',').unwrap();
    let shifted = format!("{:e},{v}", t.parse::<f64>().unwrap() + 1e-11);
    let mut bad = lines.clone();
    bad[3] = shifted;
    std::fs::write(dir.join("bad.csv"), bad.join("\n")).unwrap();
    let out = dlr(&dir, &["fit", "--basis", "basis.json", "--samples", "bad.csv", "--out", "e.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));

    lines.pop();
    std::fs::write(dir.join("short.csv"), lines.join("\n")).unwrap();
    let out = dlr(&dir, &["fit", "--basis", "basis.json", "--samples", "short.csv", "--out", "e.json"]);
    assert_eq!(code(&out), 2);

    let m = ok(
        &dir,
        &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json", "--sampling", "matsubara"],
    );
    let shifted: Vec<String> = m
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 1 { l.replacen(l.split(',').next().unwrap(), "12345", 1) } else { l.to_string() })
        .collect();
    std::fs::write(dir.join("mbad.csv"), shifted.join("\n")).unwrap();
    let out = dlr(
        &dir,
        &["fit", "--basis", "basis.json", "--samples", "mbad.csv", "--domain", "matsubara", "--out", "e.json"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn broken_conjugate_symmetry_warns() {
    let (_d, dir) = setup("100", "1e-8");
    let m = ok(
        &dir,
        &["bench", "--case", "semicircle", "--beta", "100", "--samples-for", "basis.json", "--sampling", "matsubara"],
    );
    // A real part on one sample has no conjugate partner at -n-1.
    let broken: Vec<String> = m
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 5 {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},{}", f[0], 1e-3, f[2])
            } else {
                l.to_string()
            }
        })
        .collect();
    std::fs::write(dir.join("b.csv"), broken.join("\n")).unwrap();
    let out =
        dlr(&dir, &["fit", "--basis", "basis.json", "--samples", "b.csv", "--domain", "matsubara", "--out", "e.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not conjugate-consistent"));
    assert!(residual(&String::from_utf8_lossy(&out.stdout)) > 1e-8);
}

#[test]
fn bench_sweep_saturates() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &["bench", "--case", "semicircle", "--beta", "100", "--eps", "1e-10", "--lambda", "10,30,100,300"],
    );
    let rows = csv_rows(&out, "lambda,eps,r,error");
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1][3] < w[0][3] || w[1][0] > 100.0));
    assert!(rows.iter().filter(|r| r[0] >= 100.0).all(|r| r[3] <= 5e-10), "{rows:?}");

    let two = ok(
        dir.path(),
        &[
            "bench",
            "--case",
            "two-pole",
            "--beta",
            "100",
            "--eps",
            "1e-10",
            "--lambda",
            "100",
            "--sampling",
            "matsubara",
        ],
    );
    assert!(csv_rows(&two, "lambda,eps,r,error")[0][3] <= 50.0 * 1e-10);
}

#[test]
fn dyson_methods_agree_on_toy_problem() {
    let (_d, dir) = setup("1000", "1e-14");
    let args = |m: &'static str, out: &'static str| {
        ["dyson", "--basis", "basis.json", "--e0", "20", "--e1", "-30", "--v", "15", "--method", m, "--out", out]
    };
    let a = csv_rows(&ok(&dir, &args("imaginary-time", "gt.json")), "tau,value");
    let b = csv_rows(&ok(&dir, &args("matsubara", "gm.json")), "tau,value");
    assert!(a.iter().zip(&b).all(|(x, y)| (x[1] - y[1]).abs() <= 1e-11));
    assert_eq!(code(&dlr(&dir, &["dyson", "--basis", "basis.json", "--e0", "1", "--out", "g.json"])), 2);
}

#[test]
fn syk_defaults_and_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = Instant::now();
    let out = dlr(d, &["syk", "--out", "tau.csv", "--save", "run"]);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(out.status.success());
    assert!(elapsed < 10.0, "{elapsed} s");
    assert!(String::from_utf8_lossy(&out.stderr).contains("converged = true"));
    ok(d, &["syk", "--method", "matsubara", "--out", "mats.csv"]);
    let a = csv_rows(&std::fs::read_to_string(d.join("tau.csv")).unwrap(), "tau,value");
    let b = csv_rows(&std::fs::read_to_string(d.join("mats.csv")).unwrap(), "tau,value");
    assert!(a.len() > 100 && a.len() == b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x[0] == y[0] && (x[1] - y[1]).abs() <= 1e-11));
    assert!(a.iter().all(|x| x[0] > 0.0 && x[0] < 1e4));

    // The saved expansion evaluates consistently with the node output.
    let at = csv_rows(&ok(d, &["eval", "--basis", "run.basis.json", "--expansion", "run.expansion.json"]), "tau,value");
    assert!(at.iter().zip(&a).all(|(x, y)| (x[0] * 1e4 - y[0]).abs() <= 1e-12 && (x[1] - y[1]).abs() <= 1e-14));
    let phys = ok(d, &["eval", "--basis", "run.basis.json", "--expansion", "run.expansion.json", "--beta", "1e4"]);
    assert!(csv_rows(&phys, "tau,value").iter().zip(&a).all(|(x, y)| x[0] == y[0]));
}

#[test]
fn syk_non_convergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlr(dir.path(), &["syk", "--beta", "100", "--max-iter", "3"]);
    assert_eq!(code(&out), 3);
    assert!(csv_rows(&String::from_utf8_lossy(&out.stdout), "tau,value").iter().all(|r| r[1].is_finite()));
}

#[test]
fn syk_kappa_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["syk-kappa", "--betas", "50,100"]);
    let rows = csv_rows(&out, "beta,r,kappa");
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] > 0.9 && r[2] < 1.0467));
    let k0: f64 = out.lines().last().unwrap().strip_prefix("K(0) = ").unwrap().parse().unwrap();
    assert!(k0.is_finite());
    assert_eq!(code(&dlr(dir.path(), &["syk-kappa", "--betas", "50,120"])), 2);
}

#[test]
fn grid_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["grid", "--lambda", "1e4", "--p", "24"]);
    let res: Vec<f64> = out.lines().map(|l| l.rsplit(' ').next().unwrap().parse().unwrap()).collect();
    assert_eq!(res.len(), 2);
    assert!(res.iter().all(|&r| r <= 1e-13));
}

#[test]
fn deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["build", "--lambda", "1000", "--eps", "1e-10"]);
    let b = ok(dir.path(), &["build", "--lambda", "1000", "--eps", "1e-10"]);
    assert_eq!(a, b);
}
