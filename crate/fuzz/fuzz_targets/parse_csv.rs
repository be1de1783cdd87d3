#![no_main]

use libfuzzer_sys::fuzz_target;
use sensmat::table::parse_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_csv(text) {
        let _ = table.to_csv_string();
    }
});
