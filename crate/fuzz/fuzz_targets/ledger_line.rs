#![no_main]

use libfuzzer_sys::fuzz_target;
use quilt_core::io::parse_ledger_line;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(entry) = parse_ledger_line(line) {
        let again = parse_ledger_line(&serde_json::to_string(&entry).unwrap()).unwrap();
        assert_eq!(entry, again);
    }
});
