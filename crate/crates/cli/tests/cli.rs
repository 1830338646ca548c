use std::path::Path;
use std::process::Command as Process;

use proptest::prelude::*;

use fexpo_cli::commands::distance_sweep;
use fexpo_cli::config::{parse_real_list, Command, ExperimentConfig, Settings};
use fexpo_cli::error::CliError;
use fexpo_cli::{execute, parse_threads};
use fexpo_core::io::decode_paths;

fn cfg(command: Command, json: &str) -> ExperimentConfig {
    ExperimentConfig::resolve(command, Settings::from_json(json).unwrap()).unwrap()
}

fn fexpo(dir: &Path, args: &[&str], threads: Option<&str>) -> i32 {
    let config = dir.join("config.json");
    if !config.exists() {
        std::fs::write(&config, "{}").unwrap();
    }
    let mut p = Process::new(env!("CARGO_BIN_EXE_fexpo"));
    p.args(args).arg("--config").arg(&config);
    p.env_remove("FEXPO_THREADS");
    if let Some(t) = threads {
        p.env("FEXPO_THREADS", t);
    }
    p.output().unwrap().status.code().unwrap()
}

#[test]
fn scaled_constant_fails_kernel_check() {
    let good = execute(&cfg(Command::KernelCheck, r#"{"h_list": [0.3, 0.7]}"#)).unwrap();
    assert!(good.passed);
    let bad = execute(&cfg(Command::KernelCheck, r#"{"h_list": [0.3, 0.7], "fault_ch_scale": 1.01}"#)).unwrap();
    assert!(!bad.passed);
}

#[test]
fn zero_volatility_is_refused() {
    for command in [Command::MalliavinCheck, Command::DistanceSweep] {
        let err = ExperimentConfig::resolve(command, Settings::from_json(r#"{"sigma": 0}"#).unwrap()).unwrap_err();
        assert!(matches!(err, CliError::Config { field: "sigma", .. }), "{err}");
    }
    // Plain simulation of F is fine without volatility.
    cfg(Command::Simulate, r#"{"sigma": 0}"#);
}

#[test]
fn reruns_are_identical() {
    let c = cfg(Command::Simulate, r#"{"paths": 5000, "n": 64, "write_paths": true, "seed": 3}"#);
    let a = execute(&c).unwrap();
    let b = execute(&c).unwrap();
    assert_eq!(a.outputs, b.outputs);
    let other = execute(&cfg(Command::Simulate, r#"{"paths": 5000, "n": 64, "write_paths": true, "seed": 4}"#)).unwrap();
    assert_ne!(a.outputs.paths, other.outputs.paths);
}

#[test]
fn written_paths_decode() {
    let c = cfg(Command::Simulate, r#"{"paths": 4100, "n": 32, "write_paths": true, "h": 0.3}"#);
    let out = execute(&c).unwrap();
    let batch = decode_paths(out.outputs.paths.as_ref().unwrap(), 1.0).unwrap();
    assert_eq!(batch.n_paths(), 4100);
    assert_eq!(batch.grid().nodes_len(), 33);
    assert_eq!(batch.hurst().value(), 0.3);
}

#[test]
fn csv_starts_with_provenance() {
    let c = cfg(Command::KernelCheck, r#"{"h_list": [0.5]}"#);
    let out = execute(&c).unwrap();
    let text = String::from_utf8(out.outputs.csv).unwrap();
    let first = text.lines().next().unwrap();
    assert_eq!(
        first,
        format!("# fexpo kernel-check schema_version=1 config_hash={} master_seed=42", c.hash())
    );
    let json: serde_json::Value = serde_json::from_slice(&out.outputs.json).unwrap();
    assert_eq!(json["config_hash"], c.hash());
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn zero_shift_gives_zero_distances() {
    let c = cfg(
        Command::DistanceSweep,
        r#"{"h": 0.3, "delta": [0, 0.1, 0.2, 0.3], "paths": 3000, "n": 64}"#,
    );
    let (report, _) = distance_sweep::run(&c).unwrap();
    let zero = &report.reports[0];
    assert_eq!(zero.h1, zero.h2);
    assert_eq!(zero.ks_stat, 0.0);
    assert_eq!(zero.l2_F.value, 0.0);
    assert_eq!(zero.l2_DF.value, 0.0);
    assert_eq!(zero.sup_l2_path.value, 0.0);
    assert!(report.cells[0].noise_dominated.l2_F);
    for r in &report.reports {
        assert!((0.0..=1.0).contains(&r.ks_stat));
        assert!(r.l2_F.value >= 0.0 && r.l2_DF.value >= 0.0 && r.sup_l2_path.value >= 0.0);
    }
    // The zero shift never enters a fit.
    assert!(report.slopes.iter().all(|s| s.points_used <= 3));
}

#[test]
fn sweep_needs_the_coupled_generator() {
    let c = cfg(Command::DistanceSweep, r#"{"generator": "circulant", "paths": 10}"#);
    assert!(matches!(
        distance_sweep::run(&c),
        Err(CliError::Config { field: "generator", .. })
    ));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(fexpo(dir.path(), &["kernel-check", "--h-list", "0.4", "--out", out], None), 0);
    assert!(dir.path().join("out/report.json").exists());
    assert!(dir.path().join("out/report.csv").exists());
    assert_eq!(
        fexpo(dir.path(), &["kernel-check", "--h-list", "0.4", "--fault-ch-scale", "1.01", "--out", out], None),
        1
    );
    assert_eq!(fexpo(dir.path(), &["kernel-check", "--h", "1.5", "--out", out], None), 2);
    assert_eq!(fexpo(dir.path(), &["kernel-check", "--out", out], Some("zero")), 2);
    assert_eq!(fexpo(dir.path(), &["no-such-command", "--out", out], None), 2);
    assert_eq!(fexpo(dir.path(), &["kernel-check", "--h-list", "0.4", "--out", out], Some("1")), 0);
}

#[test]
fn missing_config_is_an_error() {
    let status = Process::new(env!("CARGO_BIN_EXE_fexpo")).arg("kernel-check").output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let status = Process::new(env!("CARGO_BIN_EXE_fexpo"))
        .args(["kernel-check", "--config", "/nonexistent/fexpo.json"])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn thread_caps() {
    assert_eq!(parse_threads("4").unwrap(), 4);
    assert_eq!(parse_threads(" 1 ").unwrap(), 1);
    assert!(parse_threads("0").is_err());
    assert!(parse_threads("-2").is_err());
}

proptest! {
    #[test]
    fn real_lists_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..8)) {
        let text = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_real_list(&text).unwrap(), values);
    }

    #[test]
    fn overlay_prefers_the_override(base in 0.05f64..0.95, over in 0.05f64..0.95, seed in any::<u64>()) {
        let a = Settings { h: Some(base), seed: Some(seed), ..Settings::default() };
        let b = Settings { h: Some(over), ..Settings::default() };
        let merged = a.overlay(b);
        prop_assert_eq!(merged.h, Some(over));
        prop_assert_eq!(merged.seed, Some(seed));
    }

    #[test]
    fn hash_tracks_the_seed(s1 in any::<u64>(), s2 in any::<u64>()) {
        let c1 = cfg(Command::KernelCheck, &format!(r#"{{"seed": {s1}}}"#));
        let c2 = cfg(Command::KernelCheck, &format!(r#"{{"seed": {s2}}}"#));
        prop_assert_eq!(c1.hash() == c2.hash(), s1 == s2);
    }
}

#[test]
fn sweep_verdicts_are_stable_across_seeds() {
    let runs: Vec<_> = [1u64, 2, 3]
        .iter()
        .map(|seed| {
            let c = cfg(
                Command::DistanceSweep,
                &format!(r#"{{"h": 0.4, "delta": [0.05, 0.1, 0.2], "n": 128, "paths": 100000, "seed": {seed}}}"#),
            );
            distance_sweep::run(&c).unwrap().0
        })
        .collect();
    for metric in ["l2_F", "l2_DF", "sup_l2_path", "ks_stat", "test_function"] {
        let verdicts: Vec<bool> = runs
            .iter()
            .map(|r| r.slopes.iter().find(|s| s.metric == metric).unwrap().pass)
            .collect();
        assert!(verdicts.iter().all(|v| *v == verdicts[0]), "{metric}: {verdicts:?}");
    }
    for cell in 0..3 {
        let a = runs[0].reports[cell].l2_F;
        for r in &runs[1..] {
            let b = r.reports[cell].l2_F;
            assert_ne!(a.value, b.value);
            assert!((a.value - b.value).abs() <= 4.0 * a.stderr.hypot(b.stderr));
        }
    }
}
