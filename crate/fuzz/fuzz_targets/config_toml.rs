#![no_main]

use homsim_cli::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::parse(text) else { return };
    let _ = cfg.validate();
    let _ = cfg.fingerprint();
    // Serialized configs must parse again.
    ExperimentConfig::parse(&cfg.to_toml()).expect("re-encoded config parses");
});
