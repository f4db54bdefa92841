#![no_main]

use homsim_cli::formats::datasets_from_csv;
use homsim_core::fitting::{fit_coincidence_curve, FitProblem};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sets) = datasets_from_csv(text) else { return };
    if sets.len() == 1 && sets[0].points.len() <= 64 {
        if let Ok(r) = fit_coincidence_curve(&FitProblem::single(sets[0].clone())) {
            assert!(r.t2[0] <= 2.0 * r.t1[0] * (1.0 + 1e-12));
        }
    }
});
