#![no_main]

use fexpo_core::io::{decode_paths, encode_paths};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(batch) = decode_paths(data, 1.0) {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(encode_paths(&batch).unwrap(), data);
    }
});
