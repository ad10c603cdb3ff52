#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(state) = zps_core::io::parse_state_json(text) {
            assert!(state.as_array().iter().all(|p| p.is_finite() && *p >= 0.0));
        }
    }
});
