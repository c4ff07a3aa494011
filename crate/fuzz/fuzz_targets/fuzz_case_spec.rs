#![no_main]

use bidreserve::runner::CaseSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = text.parse::<CaseSpec>() {
        let back: CaseSpec = c.to_string().parse().expect("display output parses");
        assert_eq!(back, c);
    }
});
