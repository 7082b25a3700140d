#![no_main]

use dcs_core::decentralized::Topology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(topo) = Topology::from_edge_list(text) {
            assert_eq!(Topology::from_edge_list(&topo.to_edge_list()).unwrap(), topo);
        }
    }
});
