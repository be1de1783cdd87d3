#![no_main]

use libfuzzer_sys::fuzz_target;
use sensmat::config::RawConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = RawConfig::parse(text) {
        if let Ok(cfg) = raw.resolve() {
            // A resolved config must survive its own canonical form.
            let again = sensmat::config::parse_config(&cfg.canonical()).expect("canonical form parses");
            assert_eq!(again.digest(), cfg.digest());
        }
    }
});
