#![no_main]

use homsim_cli::formats::{events_from_csv, events_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(events) = events_from_csv(text) else { return };
    let again = events_from_csv(&events_to_csv(&events, "00")).expect("re-encoded events parse");
    assert_eq!(events, again);
});
