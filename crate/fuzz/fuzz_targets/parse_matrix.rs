#![no_main]

use libfuzzer_sys::fuzz_target;
use sensmat::model::parse_matrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sm) = parse_matrix(text) {
        let again = parse_matrix(&sm.to_string()).expect("display form parses");
        assert_eq!(again, sm);
    }
});
