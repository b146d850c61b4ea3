#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::agent::AgentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<AgentConfig>(data) {
        let _ = cfg.validate();
    }
});
