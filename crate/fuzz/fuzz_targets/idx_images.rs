#![no_main]

use dictator_core::data::idx::parse_images;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_images(data, 64) {
        assert!(img.items() <= 64);
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
});
