#![no_main]
use libfuzzer_sys::fuzz_target;

use egohand_core::io::parse_camera_file;

fuzz_target!(|data: &[u8]| {
    let _ = parse_camera_file(data);
});
