#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::header::{canonicalize_type_text, parse_type, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let opts = ParseOptions::default();
    if let Ok(t) = parse_type(text, &opts) {
        let c = t.canonical();
        assert_eq!(canonicalize_type_text(&c, &opts), c);
    }
});
