#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::parse(text) {
        let again = RunConfig::parse(&config.to_json().unwrap()).unwrap();
        assert_eq!(again, config);
        let _ = config.build();
    }
});
