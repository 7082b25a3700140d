#![no_main]

use dcs_core::jsm::JsmState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(state) = JsmState::from_text(text) {
            assert_eq!(JsmState::from_text(&state.to_text()).unwrap(), state);
        }
    }
});
