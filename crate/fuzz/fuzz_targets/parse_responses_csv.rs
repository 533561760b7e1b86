#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::evaluators::external::{format_responses_csv, parse_responses_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(values) = parse_responses_csv(text) else { return };
    // Names needing CSV quoting and NaN do not survive a plain round trip.
    let plain = values
        .keys()
        .all(|k| !k.contains([',', '"', '#', '\n', '\r']) && k.trim() == k);
    if plain && values.values().all(|v| !v.is_nan()) {
        assert_eq!(parse_responses_csv(&format_responses_csv(&values)).unwrap(), values);
    }
});
