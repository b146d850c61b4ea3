#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::agent::parse_response;

fuzz_target!(|data: &[u8]| {
    let _ = parse_response(data);
});
