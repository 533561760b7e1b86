#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::persist::{format_history_csv, parse_history_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_history_csv(text) {
        let again = parse_history_csv(&format_history_csv(&rows).unwrap()).unwrap();
        assert_eq!(again.len(), rows.len());
    }
});
