#![no_main]

use homsim_cli::formats::{decode_events, events_from_binary, events_to_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_events(data);
    let Ok((fingerprint, events)) = events_from_binary(data) else { return };
    assert_eq!(events_to_binary(&events, &fingerprint), data);
});
