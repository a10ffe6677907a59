#![no_main]

use libfuzzer_sys::fuzz_target;
use roadcast::eval::PredictorKind;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kinds) = PredictorKind::parse_list(text) {
        assert!(!kinds.is_empty());
    }
});
