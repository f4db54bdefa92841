#![no_main]

use homsim_cli::formats::{histogram_from_text, histogram_to_text};
use homsim_core::histogram::integrate_peaks;
use homsim_core::model::InterferometerGeometry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(h) = histogram_from_text(text) else { return };
    let again = histogram_from_text(&histogram_to_text(&h, "00")).expect("re-encoded histogram parses");
    assert_eq!(h.counts(), again.counts());
    let g = InterferometerGeometry::from_ns(3.0, 3.0, 81.0, 1.0).expect("paper geometry");
    if let Ok(areas) = integrate_peaks(&h, &g) {
        assert_eq!(areas.total(), h.total());
    }
});
