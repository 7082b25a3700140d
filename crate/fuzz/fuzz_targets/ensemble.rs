#![no_main]

use dcs_core::jsm::SensingEnsemble;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SensingEnsemble::from_text(text);
    }
});
