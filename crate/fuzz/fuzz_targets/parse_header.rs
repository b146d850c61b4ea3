#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::header::{parse_header_with, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let ast = parse_header_with(text, "Fuzz.h", &ParseOptions::default());
    // every recovered method must render to something that parses back
    for m in ast.methods() {
        let again = sigrec_core::header::parse_method(&m.render(), &ParseOptions::default())
            .expect("rendered method re-parses");
        assert!(again.same_signature(m));
    }
});
