#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::header::{parse_method, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let opts = ParseOptions::default();
    if let Ok(d) = parse_method(text, &opts) {
        let back = parse_method(&d.render(), &opts).expect("render re-parses");
        assert!(back.same_signature(&d));
    }
});
