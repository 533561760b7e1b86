#![no_main]

use libfuzzer_sys::fuzz_target;
use srsm_core::srsm::{IterationRecord, RunState};

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = serde_json::from_slice::<RunState>(data) {
        let _ = srsm_core::srsm::RunResult::from_state(&state);
    }
    let _ = serde_json::from_slice::<IterationRecord>(data);
});
