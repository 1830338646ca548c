#![no_main]

use fexpo_core::io::{decode_weights, read_weights};
use fexpo_core::kernel::HurstIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_weights(data) {
        assert_eq!(m.nrows(), m.ncols());
        let _ = read_weights(data, HurstIndex::new(0.3).unwrap(), 1.0);
    }
});
