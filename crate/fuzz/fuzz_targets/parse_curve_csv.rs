#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::evaluators::external::parse_curve_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(curve) = parse_curve_csv("fuzz", text) {
        assert!(curve.dt > 0.0 && !curve.values.is_empty());
    }
});
