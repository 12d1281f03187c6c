#![no_main]

use libfuzzer_sys::fuzz_target;
use quilt_core::io::QuerySpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = text.parse::<QuerySpec>();
});
