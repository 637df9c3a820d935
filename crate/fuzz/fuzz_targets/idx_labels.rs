#![no_main]

use dictator_core::data::idx::parse_labels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_labels(data, 64);
});
