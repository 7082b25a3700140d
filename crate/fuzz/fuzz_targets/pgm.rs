#![no_main]

use dcs_harness::image::{decode_pgm, encode_p5};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = decode_pgm(data) {
        assert!(grid.data.iter().all(|v| (0.0..=1.0).contains(v)));
        // re-encoding at 8 bits is stable after one quantization
        let once = decode_pgm(&encode_p5(&grid)).expect("encoder output decodes");
        assert_eq!(encode_p5(&once), encode_p5(&grid));
    }
});
