use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sinai_lab::config::ExperimentConfig;
use sinai_lab::screen::{records_from_amplitudes, two_source_amplitudes, ScreenRecord};
use sinai_lab::snapshot::read_field_snapshot;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sinai-lab"));
    c.env_remove("SINAI_LAB_OUTPUT_ROOT");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Golden straight geometry on a coarse grid for a short time.
fn tiny_config(dir: &Path) -> PathBuf {
    let src = fs::read_to_string(configs().join("straight.toml")).unwrap();
    let mut cfg = ExperimentConfig::parse(&src, "straight.toml").unwrap();
    let grid = cfg.grid.as_mut().unwrap();
    grid.rows = 300;
    grid.dt = None;
    let run = cfg.run.as_mut().unwrap();
    run.t_end = 0.004;
    run.n_steps = None;
    run.film_window = [0.001, 0.004];
    run.snapshot_cadence = 100;
    run.slits = sinai_lab::config::SlitMode::Both;
    let path = dir.join("tiny.toml");
    let text = cfg.echo().replace("dt = ", "# dt = ").replace("n_steps = ", "# n_steps = ");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn shipped_configs_echo_round_trip() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = ExperimentConfig::load(&path).unwrap();
        let echo = cfg.echo();
        let again = ExperimentConfig::parse(&echo, "echo").unwrap();
        assert_eq!(again.echo(), echo, "{}", path.display());
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn config_errors_exit_2_with_key_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(configs().join("sid_sparse.toml")).unwrap().replace("n_points", "n_pionts");
    let path = tmp.path().join("bad.toml");
    fs::write(&path, src).unwrap();
    let o = bin().args(["sid", "--config"]).arg(&path).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("n_pionts") && err.contains("line 11"), "{err}");

    // a block the command needs is missing
    let o = bin()
        .args(["classical", "--config"])
        .arg(configs().join("sid_dense.toml"))
        .arg("--out")
        .arg(tmp.path().join("o2"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[geometry]"));
}

#[test]
fn poles_infinite_radius_and_validity() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["poles", "--u0", "10", "--a-coef", "1", "--nu", "0", "--a", "inf", "--out"])
        .arg(tmp.path().join("p"))
        .output()
        .unwrap();
    let v = stdout_json(&o);
    assert_eq!(v["t_D"], "inf");
    assert_eq!(v["gamma"], 0.0);

    let o = bin()
        .args(["poles", "--u0", "1", "--a-coef", "2", "--nu", "0", "--a", "0.01", "--out"])
        .arg(tmp.path().join("q"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("I0 <= 0"));

    // the shipped example: back-solved so that t_D = 1 s
    let o = bin()
        .args(["poles", "--config"])
        .arg(configs().join("poles_electron_1cm.toml"))
        .arg("--out")
        .arg(tmp.path().join("r"))
        .output()
        .unwrap();
    let v = stdout_json(&o);
    assert!((v["t_D"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let sweep = fs::read_to_string(tmp.path().join("r/sweep.csv")).unwrap();
    assert!(sweep.trim_end().ends_with("inf,0.0000000000000000e0,inf"));
}

#[test]
fn output_dir_rules() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["poles", "--u0", "10", "--a-coef", "1", "--nu", "1", "--a", "0.5", "--units", "natural", "--out", "run"];
    let o = bin().env("SINAI_LAB_OUTPUT_ROOT", tmp.path()).args(args).output().unwrap();
    stdout_json(&o);
    let dir = tmp.path().join("run");
    assert!(dir.join("config.toml").exists() && dir.join("summary.json").exists());
    let m = manifest(&dir);
    assert!(m["sha256"]["summary.json"].as_str().unwrap().len() == 64);

    let o = bin().env("SINAI_LAB_OUTPUT_ROOT", tmp.path()).args(args).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let o = bin().env("SINAI_LAB_OUTPUT_ROOT", tmp.path()).args(args).arg("--force").output().unwrap();
    stdout_json(&o);
}

#[test]
fn simulate_is_reproducible_from_its_echoed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = |config: &Path, out: &str| {
        let o = bin().args(["simulate", "--config"]).arg(config).arg("--out").arg(tmp.path().join(out)).output().unwrap();
        stdout_json(&o);
        manifest(&tmp.path().join(out))
    };
    let a = run(&cfg, "a");
    let b = run(&cfg, "b");
    assert_eq!(a["sha256"], b["sha256"]);
    let c = run(&tmp.path().join("a/config.toml"), "c");
    assert_eq!(a["sha256"], c["sha256"]);

    let files = a["sha256"].as_object().unwrap();
    assert!(files.contains_key("pattern_both.csv") && files.contains_key("final_both.qbil"));
    let snap = files.keys().find(|k| k.starts_with("snapshot_both_")).expect("periodic snapshots");
    let f = read_field_snapshot(&tmp.path().join("a").join(snap)).unwrap();
    assert_eq!(f.ny, 300);
    assert!(f.norm() > 0.0 && f.norm() <= 1.0 + 1e-9);
}

#[test]
fn analyze_decomposes_a_triplet() {
    let tmp = tempfile::tempdir().unwrap();
    let xs: Vec<f64> = (0..400).map(|i| -1.0 + 0.005 * i as f64).collect();
    let [a1, a2] = two_source_amplitudes([[-0.15, 0.0], [0.15, 0.0]], 60.0, &xs, -1.2);
    let (both, only1, only2) = records_from_amplitudes(&xs, &a1, &a2, (0.0, 0.0));
    for (r, name) in [(&both, "both.csv"), (&only1, "only1.csv"), (&only2, "only2.csv")] {
        r.write_csv(&tmp.path().join(name)).unwrap();
    }
    let cfg = tmp.path().join("a.toml");
    fs::write(&cfg, "[analysis]\nvisibility_window = [-0.5, 0.5]\nsmoothing = 0.01\n").unwrap();
    let o = bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--both")
        .arg(tmp.path().join("both.csv"))
        .arg("--only1")
        .arg(tmp.path().join("only1.csv"))
        .arg("--only2")
        .arg(tmp.path().join("only2.csv"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    let v = stdout_json(&o);
    assert!(v["interference"]["cauchy_schwarz_ratio"].as_f64().unwrap() <= 1.0 + 1e-12);
    let text = fs::read_to_string(tmp.path().join("out/pattern.csv")).unwrap();
    assert!(text.starts_with("x,p,p1,p2,p_int\n"));
    let rec = ScreenRecord::read_csv(&tmp.path().join("out/pattern.csv"), (0.0, 0.0)).unwrap();
    let pi = rec.p_int.unwrap();
    for (i, v) in pi.iter().enumerate() {
        let exact = 2.0 * (a1[i] * a2[i].conj()).re;
        assert!((v - exact).abs() < 1e-10);
    }
}
