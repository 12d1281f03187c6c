#![no_main]

use libfuzzer_sys::fuzz_target;
use quilt_core::io::parse_sequences;

fuzz_target!(|data: &[u8]| {
    if let Ok(seqs) = parse_sequences(data) {
        assert!(seqs.iter().all(|s| !s.is_empty()));
    }
});
