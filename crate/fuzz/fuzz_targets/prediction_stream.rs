#![no_main]
use libfuzzer_sys::fuzz_target;

use egohand_core::io::parse_prediction_stream;

// Parsing must never panic: every malformed stream maps to Err.
fuzz_target!(|data: &[u8]| {
    let _ = parse_prediction_stream(data);
});
