#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::agent::{parse_script, ScriptedBackend};

fuzz_target!(|data: &[u8]| {
    let _ = parse_script(data);
    let _ = ScriptedBackend::from_json(data);
});
