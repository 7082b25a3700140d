#![no_main]

use dcs_core::wavelet::PyramidLayout;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(layout) = PyramidLayout::from_header(text) {
            assert_eq!(PyramidLayout::from_header(&layout.to_header()).unwrap(), layout);
        }
    }
});
