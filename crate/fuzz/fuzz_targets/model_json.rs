#![no_main]

use libfuzzer_sys::fuzz_target;
use quilt_core::io::parse_model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_model(text) {
        let again = parse_model(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(model, again);
    }
});
