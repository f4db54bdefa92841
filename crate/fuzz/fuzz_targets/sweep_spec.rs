#![no_main]

use homsim_cli::config::ExperimentConfig;
use homsim_cli::sweep::{apply, SweepSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SweepSpec::parse(text) else { return };
    let base = ExperimentConfig::parse("[emitter]\nt1_ps = 375.0\nt2_ps = 270.0\n").expect("base config");
    for value in spec.points().expect("parsed specs have points").iter().take(4) {
        let _ = apply(&base, &spec.parameter, value);
    }
});
