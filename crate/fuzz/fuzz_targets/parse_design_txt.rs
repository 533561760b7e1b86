#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::evaluators::external::{format_design_txt, parse_design_txt};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_design_txt(text) {
        assert_eq!(parse_design_txt(&format_design_txt(&values)).unwrap(), values);
    }
});
