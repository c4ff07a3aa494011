#![no_main]

use bidreserve::model::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_json_str(text) {
        if s.validate().is_ok() {
            let again = Scenario::from_json_str(&s.to_json_string()).expect("round trip");
            assert!(again.validate().is_ok());
        }
    }
});
