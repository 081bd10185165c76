#![no_main]
use acfe::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = parse_config(data) {
        // Accepted configs print and parse back to themselves.
        let again = parse_config(&cfg.to_toml()).expect("printed config parses");
        assert_eq!(again, cfg);
    }
});
