#![no_main]
use libfuzzer_sys::fuzz_target;

use egohand_core::preprocess::RectifyMap;

// Header sizes are validated against the actual payload length before any
// allocation; decoding arbitrary bytes must never panic or OOM.
fuzz_target!(|data: &[u8]| {
    let _ = RectifyMap::from_bytes(data);
});
