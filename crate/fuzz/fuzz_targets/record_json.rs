#![no_main]

use libfuzzer_sys::fuzz_target;
use quilt_core::mechanism::ReleaseRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = serde_json::from_slice::<ReleaseRecord>(data) {
        let _ = record.window();
        let _ = record.unscaled_output();
        let again: ReleaseRecord = serde_json::from_str(&serde_json::to_string(&record).unwrap()).unwrap();
        assert_eq!(record, again);
    }
});
