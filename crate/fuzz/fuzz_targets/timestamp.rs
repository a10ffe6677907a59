#![no_main]

use libfuzzer_sys::fuzz_target;
use roadcast::data::{format_timestamp, parse_timestamp};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ts) = parse_timestamp(text) {
        assert_eq!(parse_timestamp(&format_timestamp(ts)).unwrap(), ts);
    }
});
