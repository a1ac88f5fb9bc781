//! End-to-end runs of the `sue` binary against small specs and datasets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DVector;
use serde_json::Value;
use sue_cli::spec::load;
use sue_core::mvprob::special::{norm_cdf, norm_pdf};
use sue_core::oracle::{bayes_reference, BayesOptions};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sue(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sue")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn posterior_json(spec: &Path, data: &Path, out: &Path) -> Value {
    let o = sue(&["posterior", "--spec", s(spec), "--data", s(data), "--out", s(out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    sue_cli::spec::read_table(path).unwrap()
}

const GAUSS_PRIOR: &str = r#""prior": {"xi": [0.2], "Omega": [[1.5]]}"#;

fn gaussian_spec(model: &str, noise: &str) -> String {
    format!(r#"{{"model": "{model}", "generator": {{"family": "gaussian"}}, {GAUSS_PRIOR}, "noise": {noise}}}"#)
}

#[test]
fn posterior_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let va = posterior_json(&fixture("example1.json"), &fixture("data5.csv"), &a);
    posterior_json(&fixture("example1.json"), &fixture("data5.csv"), &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(va["posterior"]["m"], 1);
    assert_eq!(va["seed"], 0);
    // The shorthand is echoed in expanded form.
    assert_eq!(va["expanded_spec"]["noise"]["Omega"].as_array().unwrap().len(), 5);
}

#[test]
fn probit_latent_dimension_grows_by_n() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "probit.json",
        r#"{"model": "binary", "generator": {"family": "gaussian"},
            "prior": {"xi": [0.2], "Omega": [[1.5]], "Delta": [[0.6]], "tau": [0.3], "Gamma": [[1.0]]},
            "noise": {"Omega": [[1.0, 0.0], [0.0, 1.0]]}}"#,
    );
    let data = write(&dir, "y.csv", "x_1,y\n1.0,1\n-0.6,1\n");
    let v = posterior_json(&spec, &data, &dir.path().join("out.json"));
    assert_eq!(v["posterior"]["q"], 3);
    assert_eq!(v["diagnostics"]["latent_growth"], 2);
    let o = sue(&["check", "--spec", s(&spec), "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn censored_without_zeros_matches_linear() {
    let dir = TempDir::new().unwrap();
    let noise = r#"{"kind": "skew_normal", "sigma2": 0.6, "alpha": 2.0}"#;
    let lin = write(&dir, "lin.json", &gaussian_spec("linear", noise));
    let cen = write(&dir, "cen.json", &gaussian_spec("censored", noise));
    let data = write(&dir, "y.csv", "x_1,y\n1.0,0.9\n-0.6,0.4\n0.3,1.2\n");
    let mut a = posterior_json(&lin, &data, &dir.path().join("a.json"));
    let mut b = posterior_json(&cen, &data, &dir.path().join("b.json"));
    for v in [&mut a, &mut b] {
        v["model"] = Value::Null;
        v["expanded_spec"]["model"] = Value::Null;
    }
    assert_eq!(a, b);
}

#[test]
fn sample_mean_matches_closed_form() {
    // Gaussian prior and one skew-normal observation: a SUN_{1,1} posterior
    // with mean ξ + ω δ φ(τ)/Φ(τ).
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.json", &gaussian_spec("linear", r#"{"kind": "skew_normal", "sigma2": 0.6, "alpha": 2.0}"#));
    let data = write(&dir, "y.csv", "x_1,y\n1.0,0.9\n");
    let v = posterior_json(&spec, &data, &dir.path().join("p.json"));
    let post = &v["posterior"];
    assert_eq!(post["q"], 1);
    let f = |x: &Value| x.as_f64().unwrap();
    let (xi, omega, delta, tau) = (f(&post["xi"][0]), f(&post["Omega"][0][0]), f(&post["Delta"][0][0]), f(&post["tau"][0]));
    let mean = xi + omega.sqrt() * delta * norm_pdf(tau) / norm_cdf(tau);

    let out = dir.path().join("draws.csv");
    let o = sue(&["sample", "--spec", s(&spec), "--data", s(&data), "--n", "40000", "--seed", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("acceptance_rate="));
    let (header, rows) = table(&out);
    assert_eq!(header, vec!["beta_1"]);
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[0]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[0] - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((m - mean).abs() < 4.0 * (var / n).sqrt(), "{m} vs {mean}");
}

#[test]
fn zero_draws_write_a_header() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("draws.csv");
    let o = sue(&["sample", "--spec", s(&fixture("example1.json")), "--data", s(&fixture("data5.csv")), "--n", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "beta_1\n");
}

#[test]
fn extreme_separation_exits_with_low_acceptance() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "sep.json",
        r#"{"model": "binary", "generator": {"family": "gaussian"},
            "prior": {"xi": [-6.0], "Omega": [[1.0]]}, "noise": {"Omega": [[0.01]]}}"#,
    );
    let data = write(&dir, "y.csv", "x_1,y\n1.0,1\n");
    let o = sue(&["sample", "--spec", s(&spec), "--data", s(&data), "--n", "10", "--out", s(&dir.path().join("d.csv"))]);
    assert_eq!(o.status.code(), Some(5));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.lines().any(|l| l.starts_with("error: acceptance rate")), "{err}");
}

#[test]
fn symmetric_posterior_peaks_at_its_location() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "g.json", &gaussian_spec("linear", r#"{"Omega": [[0.5, 0.0], [0.0, 0.5]]}"#));
    let data = write(&dir, "y.csv", "x_1,y\n1.0,0.9\n-0.6,-0.4\n");
    let v = posterior_json(&spec, &data, &dir.path().join("p.json"));
    assert_eq!(v["posterior"]["q"], 0);
    let xi = v["posterior"]["xi"][0].as_f64().unwrap();
    let probes: Vec<f64> = (-5..=5).map(|k| xi + 0.1 * k as f64).collect();
    let points = write(&dir, "pts.csv", &format!("beta_1\n{}\n", probes.iter().map(|p| format!("{p:.17e}")).collect::<Vec<_>>().join("\n")));
    let out = dir.path().join("d.csv");
    let o = sue(&["density", "--spec", s(&spec), "--data", s(&data), "--points", s(&points), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = table(&out);
    assert_eq!(header, vec!["beta_1", "log_density", "log_density_error"]);
    let best = (0..rows.len()).max_by(|&a, &b| rows[a][1].total_cmp(&rows[b][1])).unwrap();
    assert_eq!(best, 5);
}

#[test]
fn raw_and_standardized_gamma_agree() {
    let dir = TempDir::new().unwrap();
    let noise = r#"{"Omega": [[0.6]], "Delta": [[0.3]], "tau": [0.0], "Gamma": [[1.0]]}"#;
    let raw = write(
        &dir,
        "raw.json",
        &format!(
            r#"{{"model": "linear", "generator": {{"family": "student_t", "nu": 5.0}},
                "prior": {{"xi": [0.2], "Omega": [[1.5]], "Delta": [[1.2]], "tau": [0.8], "Gamma": [[4.0]]}}, "noise": {noise}}}"#
        ),
    );
    let std = write(
        &dir,
        "std.json",
        &format!(
            r#"{{"model": "linear", "generator": {{"family": "student_t", "nu": 5.0}},
                "prior": {{"xi": [0.2], "Omega": [[1.5]], "Delta": [[0.6]], "tau": [0.4], "Gamma": [[1.0]]}}, "noise": {noise}}}"#
        ),
    );
    let data = write(&dir, "y.csv", "x_1,y\n1.0,0.7\n");
    let points = write(&dir, "pts.csv", "beta_1\n-1.0\n0.0\n0.5\n2.0\n");
    let dens = |spec: &Path, name: &str| {
        let out = dir.path().join(name);
        let o = sue(&["density", "--spec", s(spec), "--data", s(&data), "--points", s(&points), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        table(&out).1
    };
    let (a, b) = (dens(&raw, "a.csv"), dens(&std, "b.csv"));
    for (ra, rb) in a.iter().zip(&b) {
        assert!((ra[1].exp() - rb[1].exp()).abs() < 1e-10, "{ra:?} vs {rb:?}");
    }
}

#[test]
fn density_matches_grid_reference() {
    let dir = TempDir::new().unwrap();
    let spec = fixture("example2.json");
    let data = fixture("data2.csv");
    let model = load(&spec, &data).unwrap();
    let opts = BayesOptions::for_dim(1, 0);
    let reference = bayes_reference(&model.joint, &model.observation, &opts).unwrap();
    let grid = &reference.posterior;
    let (lo, hi) = reference.region[0];
    let nodes: Vec<usize> = (0..grid.len()).filter(|&k| (lo..=hi).contains(&grid.node(k)[0])).step_by(25).collect();
    let text: String = nodes.iter().map(|&k| format!("{:.17e}\n", grid.node(k)[0])).collect();
    let points = write(&dir, "pts.csv", &format!("beta_1\n{text}"));
    let out = dir.path().join("d.csv");
    let o = sue(&["density", "--spec", s(&spec), "--data", s(&data), "--points", s(&points), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let rows = table(&out).1;
    let peak = grid.values.iter().cloned().fold(0.0, f64::max);
    for (&k, row) in nodes.iter().zip(&rows) {
        let dev = (row[1].exp() - grid.values[k]).abs() / peak;
        assert!(dev < 1e-3, "β = {}: {dev:.3e}", row[0]);
    }
}

#[test]
fn check_passes_for_both_examples_and_flags_corruption() {
    for spec in ["example1.json", "example2.json"] {
        let o = sue(&["check", "--spec", s(&fixture(spec)), "--data", s(&fixture("data2.csv"))]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(o.status.code(), Some(0), "{spec}: {stdout}");
        assert!(stdout.starts_with("max_rel_dev=") && stdout.trim_end().ends_with("PASS"));
    }
    let o = sue(&["check", "--spec", s(&fixture("example1.json")), "--data", s(&fixture("data2.csv")), "--corrupt-posterior"]);
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stdout).trim_end().ends_with("FAIL"));
}

#[test]
fn error_exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = fixture("data2.csv");
    let run = |spec: &Path, extra: &[&str]| {
        let out = dir.path().join("o.json");
        let mut args = vec!["posterior", "--spec", s(spec), "--data", s(&data), "--out", s(&out)];
        args.extend_from_slice(extra);
        sue(&args)
    };
    let bad_json = write(&dir, "bad.json", "{ not json");
    assert_eq!(run(&bad_json, &[]).status.code(), Some(2));
    let not_pd = write(&dir, "npd.json", &gaussian_spec("linear", r#"{"Omega": [[1.0, 2.0], [2.0, 1.0]]}"#));
    let o = run(&not_pd, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().filter(|l| l.starts_with("error:")).count(), 1);
    let mismatch = write(
        &dir,
        "mm.json",
        r#"{"model": "linear", "generator": {"family": "student_t", "nu": 3.0}, "prior": {"xi": [0.0], "Omega": [[1.0]]},
            "noise": {"kind": "skew_normal", "sigma2": 1.0, "alpha": 1.0}}"#,
    );
    assert_eq!(run(&mismatch, &[]).status.code(), Some(4));
    let o = sue(&["check", "--spec", s(&fixture("example1.json")), "--data", s(&fixture("data5.csv"))]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(sue(&["posterior", "--spec", "x.json"]).status.code(), Some(2));
    assert_eq!(sue(&["--help"]).status.code(), Some(0));
}

#[test]
fn result_floats_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.json");
    let v = posterior_json(&fixture("example2.json"), &fixture("data5.csv"), &out);
    let model = load(&fixture("example2.json"), &fixture("data5.csv")).unwrap();
    let post = sue_core::conjugate::posterior(&model.joint, &model.observation).unwrap().posterior;
    let xi: Vec<f64> = v["posterior"]["xi"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(DVector::from_vec(xi), *post.xi());
    let tau: Vec<f64> = v["posterior"]["tau"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(DVector::from_vec(tau), *post.tau());
    let text = std::fs::read_to_string(&out).unwrap();
    let reparsed: sue_cli::output::RunResult = serde_json::from_str(&text).unwrap();
    assert_eq!(sue_cli::output::to_json(&reparsed), text);
}
