//! Replays the checked-in fuzz corpus through the fuzz-target invariants.

use std::fs;
use std::path::PathBuf;

use fexpo_cli::config::{parse_real_list, Command, ExperimentConfig, Settings};
use fexpo_core::io::{decode_paths, decode_weights, encode_paths};
use fexpo_core::stats::TestFunction;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn path_seeds() {
    let mut accepted = 0;
    for (_, bytes) in corpus("decode_paths") {
        if let Ok(batch) = decode_paths(&bytes, 1.0) {
            assert_eq!(encode_paths(&batch).unwrap(), bytes);
            accepted += 1;
        }
    }
    assert_eq!(accepted, 1);
}

#[test]
fn weight_seeds() {
    let ok: Vec<_> = corpus("decode_weights")
        .into_iter()
        .filter_map(|(name, b)| decode_weights(&b).ok().map(|m| (name, m)))
        .collect();
    assert_eq!(ok.len(), 1);
    assert_eq!(ok[0].1.dim(), (2, 2));
}

#[test]
fn config_seeds() {
    for (name, bytes) in corpus("config_json") {
        let parsed = Settings::from_json(std::str::from_utf8(&bytes).unwrap());
        assert_eq!(parsed.is_ok(), name != "unknown_key", "{name}");
        if let Ok(s) = parsed {
            let cmd = if name == "sweep" { Command::DistanceSweep } else { Command::MalliavinCheck };
            ExperimentConfig::resolve(cmd, s).unwrap();
        }
    }
}

#[test]
fn string_seeds() {
    for (name, bytes) in corpus("test_function_id") {
        let parsed = std::str::from_utf8(&bytes).unwrap().parse::<TestFunction>();
        assert_eq!(parsed.is_ok(), name != "bad", "{name}");
    }
    for (name, bytes) in corpus("real_list") {
        let parsed = parse_real_list(std::str::from_utf8(&bytes).unwrap());
        assert_eq!(parsed.is_ok(), name != "bad", "{name}");
    }
}
