#![no_main]

use std::path::Path;

use dictator_harness::parse_config_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config_str(text, Path::new("fuzz.toml")) {
        // anything accepted must survive a round trip
        let again = parse_config_str(&cfg.to_toml(), Path::new("fuzz.toml")).expect("re-parse");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});
