#![no_main]

use dictator_core::data::idx::decode_pair;
use libfuzzer_sys::fuzz_target;

// first byte picks where the image file ends
fuzz_target!(|data: &[u8]| {
    let Some((&cut, rest)) = data.split_first() else { return };
    let cut = (cut as usize).min(rest.len());
    let (images, labels) = rest.split_at(cut);
    if let Ok(shard) = decode_pair(images, labels, 32) {
        assert!(shard.rows() <= 32);
        assert_eq!(shard.labels().len(), shard.rows());
    }
});
