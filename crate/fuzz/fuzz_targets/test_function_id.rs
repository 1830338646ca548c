#![no_main]

use fexpo_core::stats::TestFunction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(psi) = text.parse::<TestFunction>() {
        assert_eq!(psi.to_string().parse::<TestFunction>().unwrap(), psi);
    }
});
