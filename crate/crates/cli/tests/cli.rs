use std::fs;
use std::path::Path;
use std::process::Command;

use hom_cli::io::{meta_path, parse_meta, write_atomic, write_atomic_with};
use hom_cli::run;

fn hom(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hom")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn meta(path: &Path) -> Vec<(String, String)> {
    parse_meta(&fs::read_to_string(meta_path(path)).unwrap())
}

fn meta_value(kv: &[(String, String)], key: &str) -> String {
    kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_else(|| panic!("missing {key}"))
}

#[test]
fn no_arguments_prints_usage() {
    assert_eq!(run(Vec::<String>::new()), 2);
    let out = hom(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_names_the_path() {
    assert_eq!(run(["curves", "--config", "missing.cfg"]), 2);
    let out = hom(&["curves", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn unknown_flag_is_a_one_line_usage_error() {
    let out = hom(&["optimum", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().next().unwrap().contains("--frobnicate"));
}

#[test]
fn invalid_config_value_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "gamma = 1.5\n").unwrap();
    let out = hom(&["optimum", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn version_reports_schema() {
    let out = hom(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("config schema 1"));
}

#[test]
fn degenerate_fit_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let mut text = String::from("detuning_ueV,contrast\n");
    for i in 0..20 {
        text.push_str(&format!("{},0.4\n", i as f64));
    }
    fs::write(&scan, text).unwrap();
    assert_eq!(run(["fringe-fit", "--input", s(&scan)]), 3);
}

#[test]
fn fringe_fit_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let out = dir.path().join("fit.json");
    let a_d = (-380.0f64 / 285.0).exp();
    let a_l = (-380.0f64 / 1e6).exp();
    let mut text = String::from("piezo_V,contrast\n");
    for i in 0..30 {
        let v = i as f64 * 0.04;
        let e = 20.0 * v - 3.0 - 1.5;
        let phase = e * 380.0 / 658.211_956_9;
        let c = 0.5 * (a_d * a_d + a_l * a_l + 2.0 * a_d * a_l * phase.cos()).sqrt();
        text.push_str(&format!("{v},{c}\n"));
    }
    fs::write(&scan, text).unwrap();
    assert_eq!(run(["fringe-fit", "--input", s(&scan), "--affine", "-3,20", "--out", s(&out)]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let period = v["beat_period_ueV"].as_f64().unwrap();
    let off = v["offset_ueV"].as_f64().unwrap();
    let k = (off - 1.5) / period;
    assert!((k - k.round()).abs() < 1e-6, "{v}");
}

#[test]
fn mc_then_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("hbt.bin");
    let hist = dir.path().join("hbt.csv");
    let code = run([
        "mc", "--mode", "hbt-dot", "--seed", "1", "--duration-ps", "1e10", "--rate-per-ps", "4e-5", "--format", "bin",
        "--out", s(&stream),
    ]);
    assert_eq!(code, 0);
    let m = meta(&stream);
    assert_eq!(meta_value(&m, "seed"), "1");
    assert_eq!(meta_value(&m, "duration_ps").parse::<f64>().unwrap(), 1e10);

    let code = run(["correlate", "--input", s(&stream), "--mode", "hbt-dot", "--bin-ps", "64", "--out", s(&hist)]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&hist).unwrap();
    assert!(text.starts_with("tau_ps,counts,g2,sigma\n"));
    assert_eq!(text.lines().count(), 1 + 201);
    let hm = meta(&hist);
    assert_eq!(meta_value(&hm, "source_seed"), "1");
    assert_eq!(meta_value(&hm, "duration_ps").parse::<f64>().unwrap(), 1e10);
    let g0: f64 = meta_value(&hm, "g2_zero").parse().unwrap();
    let err: f64 = meta_value(&hm, "g2_zero_stderr").parse().unwrap();
    let chi2: f64 = meta_value(&hm, "chi2_per_dof").parse().unwrap();
    assert!((g0 - 0.1998).abs() < 4.0 * err, "g2(0) = {g0} ± {err}");
    assert!(chi2 < 1.5, "chi2/dof = {chi2}");
}

#[test]
fn csv_stream_round_trip_through_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("laser.csv");
    assert_eq!(
        run(["mc", "--mode", "hbt-laser", "--seed", "3", "--duration-ps", "1e9", "--rate-per-ps", "2e-5", "--tagged", "--out", s(&stream)]),
        0
    );
    assert!(fs::read_to_string(&stream).unwrap().starts_with("time_ps,channel,origin\n"));
    assert_eq!(run(["correlate", "--input", s(&stream), "--out", s(&dir.path().join("h.csv"))]), 0);
}

#[test]
fn seeded_mc_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for p in [&a, &b] {
        assert_eq!(run(["mc", "--seed", "9", "--duration-ps", "1e9", "--rate-per-ps", "1e-5", "--format", "bin", "--out", s(p)]), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(meta_path(&a)).unwrap(), fs::read(meta_path(&b)).unwrap());
}

#[test]
fn visibility_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    let out = dir.path().join("fit.json");
    let p = hom_core::SystemParams::reference();
    let mut text = String::from("ratio,visibility,sigma\n");
    for r in [0.25, 0.5, 1.0, 2.0, 4.0] {
        text.push_str(&format!("{r},{},0.02\n", hom_core::analytic::visibility_convolved(r, &p).unwrap()));
    }
    fs::write(&pts, text).unwrap();
    assert_eq!(run(["fit-visibility", "--input", s(&pts), "--out", s(&out)]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["gamma_hat", "stderr", "chi2_per_dof", "ratio_star", "v_max"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!((v["gamma_hat"].as_f64().unwrap() - 0.91).abs() < 1e-6);
}

#[test]
fn fig1b_visibility_at_unit_ratio() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(["reproduce", "fig1b", "--out", s(dir.path())]), 0);
    let text = fs::read_to_string(dir.path().join("fig1b.csv")).unwrap();
    let row = text.lines().find(|l| l.starts_with("1,")).unwrap();
    let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cols[1], 0.25);
    assert_eq!(cols[2], 0.75);
    assert!((cols[3] - 2.0 / 3.0).abs() < 1e-11);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn fig2b_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(["reproduce", "fig2b", "--out", s(dir.path())]), 0);
    let text = fs::read_to_string(dir.path().join("fig2b.csv")).unwrap();
    assert!(text.starts_with("delay_ps,detuning_ueV,contrast\n"));
    assert_eq!(text.lines().count(), 1 + 121 * 241);
}

#[test]
fn fig3_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(["reproduce", "fig3", "--seed", "42", "--duration-ps", "2e9", "--out", s(d.path())]), 0);
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 42);
}

#[test]
fn fig4_manifest_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(["reproduce", "fig4", "--seed", "5", "--duration-ps", "3e9", "--out", s(dir.path())]), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let r = m["ratio_star"].as_f64().unwrap();
    assert!((r - 2.2).abs() < 0.1, "{r}");
    assert_eq!(m["gamma_profile"].as_f64().unwrap(), 0.91);
    let pts = fs::read_to_string(dir.path().join("fig4_points.csv")).unwrap();
    assert_eq!(pts.lines().count(), 6);
}

#[test]
fn interrupted_write_leaves_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.csv");
    let crashed = std::panic::catch_unwind(|| {
        let _ = write_atomic_with(&target, |w: &mut dyn std::io::Write| {
            w.write_all(b"tau_ps,g2\n0,0.2")?;
            panic!("injected crash mid-write");
        });
    });
    assert!(crashed.is_err());
    assert!(!target.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

    write_atomic(&target, b"complete\n").unwrap();
    let _ = std::panic::catch_unwind(|| {
        let _ = write_atomic_with(&target, |w: &mut dyn std::io::Write| {
            w.write_all(b"half")?;
            panic!("injected crash mid-write");
        });
    });
    assert_eq!(fs::read(&target).unwrap(), b"complete\n");
}
