#![no_main]

use fexpo_cli::config::{Command, ExperimentConfig, Settings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(settings) = Settings::from_json(text) else { return };
    for command in [Command::KernelCheck, Command::Simulate, Command::MalliavinCheck, Command::DistanceSweep] {
        if let Ok(cfg) = ExperimentConfig::resolve(command, settings.clone()) {
            assert_eq!(cfg.hash().len(), 64);
        }
    }
});
