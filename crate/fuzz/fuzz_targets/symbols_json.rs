#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::toolbox::parse_symbols_json;

fuzz_target!(|data: &[u8]| {
    let _ = parse_symbols_json(data);
});
