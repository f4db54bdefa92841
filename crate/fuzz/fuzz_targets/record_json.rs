#![no_main]

use homsim_cli::record::ResultRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = ResultRecord::from_json(text) else { return };
    let _ = record.indistinguishability();
    ResultRecord::from_json(&record.to_json()).expect("re-encoded record parses");
});
