use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cgolab_core::io::{load_field, AnyField};
use cgolab_core::{free_propagate, Complex64, SpatialField};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgolab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let text = format!("[grid]\nn_space = 32\nn_time = 65\n{body}");
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn simulate_free_matches_free_propagation() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "free.toml", "");
    let o = run(d.path(), &["--config", &cfg, "simulate", "--out", "traj.cgf"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let AnyField::SpaceTime(u) = load_field(d.path().join("traj.cgf")).unwrap() else {
        panic!("expected a space-time field")
    };
    let g = u.grid;
    let f = SpatialField::from_fn(g, |x| Complex64::new((-x.iter().map(|a| a * a).sum::<f64>() / 2.0).exp(), 0.0));
    let want = free_propagate(&f, g.horizon).unwrap();
    let last = u.state(u.n_times() - 1);
    assert!(last.sub(&want).l2_coeffs() <= 1e-10 * want.l2_coeffs());
}

#[test]
fn verify_identity_equal_potentials() {
    let d = tempfile::tempdir().unwrap();
    let body = "[potential]\nkind = \"gaussian\"\namplitude = 0.5\n[potential2]\nkind = \"gaussian\"\namplitude = 0.5\n";
    let cfg = write_config(d.path(), "same.toml", body);
    let o = run(d.path(), &["--config", &cfg, "verify-identity", "--probes", "2", "--out", "id.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(d.path().join("id.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let gap: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap <= 1e-3);
    }
}

#[test]
fn cgo_below_threshold_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "strong.toml", "[potential]\nkind = \"gaussian\"\namplitude = 60.0\n");
    let o = run(d.path(), &["--config", &cfg, "cgo", "--nu", "2,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn cgo_writes_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "weak.toml", "[potential]\nkind = \"gaussian\"\namplitude = 0.5\n");
    let o = run(d.path(), &["--config", &cfg, "cgo", "--nu", "0,8", "--out", "c.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("c.csv")).unwrap();
    assert!(csv.starts_with("iter,increment_y_norm,residual\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("c.csv.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = run(d.path(), &["bench-multiplier", "--theta", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(d.path(), &["--config", "missing.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seeded_commands_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "v.toml", "seed = 5\n[potential]\nkind = \"bump\"\namplitude = 0.1\nwidth = 2.0\n");
    for args in [
        vec!["gen-data", "--n", "6", "--basis", "gaussian", "--noise", "0.001"],
        vec!["bench-multiplier", "--nu", "0,4", "--trials", "3"],
    ] {
        let mut outs = Vec::new();
        for k in 0..2 {
            let name = format!("out{k}");
            let mut a = vec!["--config", cfg.as_str(), "--out", name.as_str()];
            a.extend(args.iter().copied());
            let o = run(d.path(), &a);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            outs.push(fs::read(d.path().join(&name)).unwrap());
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
}

#[test]
fn reconstruct_from_dataset_and_detect_corruption() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "r.toml", "[potential]\nkind = \"gaussian\"\namplitude = 0.01\n");
    let o = run(d.path(), &["--config", &cfg, "gen-data", "--n", "25", "--out", "ds.cgd"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(
        d.path(),
        &["--config", &cfg, "reconstruct", "--time-independent", "--dataset", "ds.cgd", "--out", "est.cgf"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(matches!(load_field(d.path().join("est.cgf")).unwrap(), AnyField::SpaceTime(_)));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("est.cgf.json")).unwrap()).unwrap();
    assert_eq!(rep["method"], "born");
    assert!(rep["samples_used"].as_u64().unwrap() >= 1);
    let samples = fs::read_to_string(d.path().join("est.cgf.samples.csv")).unwrap();
    assert!(samples.starts_with("tau,xi1,xi2,re,im,weight\n"));

    let mut bytes = fs::read(d.path().join("ds.cgd")).unwrap();
    let n = bytes.len();
    bytes[n - 100] ^= 0x10;
    fs::write(d.path().join("bad.cgd"), bytes).unwrap();
    let o = run(d.path(), &["--config", &cfg, "reconstruct", "--time-independent", "--dataset", "bad.cgd"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn reconstruct_with_solver_scores_estimate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "r.toml", "[potential]\nkind = \"gaussian\"\namplitude = 0.01\n");
    let o = run(d.path(), &["--config", &cfg, "reconstruct", "--time-independent", "--method", "iterative", "--iters", "2", "--out", "e.cgf"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("e.cgf.json")).unwrap()).unwrap();
    assert!(rep["relative_l2_error"].as_f64().unwrap() < 0.1);
}

#[test]
fn uniqueness_gap_reports_number() {
    let d = tempfile::tempdir().unwrap();
    let body = "[potential]\nkind = \"bump\"\namplitude = 0.3\nwidth = 1.5\ncenter = [-2.0, 0.0]\n[potential2]\nkind = \"bump\"\namplitude = 0.3\nwidth = 1.5\ncenter = [2.0, 0.0]\n";
    let cfg = write_config(d.path(), "u.toml", body);
    let o = run(d.path(), &["--config", &cfg, "uniqueness-gap", "--probes", "2"]);
    assert!(o.status.success());
    let gap: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(gap > 1e-4);
}
