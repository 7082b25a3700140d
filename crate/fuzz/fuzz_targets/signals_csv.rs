#![no_main]

use dcs_harness::signals::{parse_signals_csv, write_signals_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = parse_signals_csv(text) {
            let out = write_signals_csv(&table.signals).unwrap();
            assert_eq!(parse_signals_csv(&out).unwrap().signals, table.signals);
        }
    }
});
