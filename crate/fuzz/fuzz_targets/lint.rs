#![no_main]

use libfuzzer_sys::fuzz_target;
use sigrec_core::header::{parse_method, ParseOptions};
use sigrec_core::linter::{apply_suggestion, lint, LintConfig};

// input: `ORIGINAL\nCANDIDATE`
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (orig, cand) = text.split_once('\n').unwrap_or(("- (id)value;", text));
    let Ok(orig) = parse_method(orig, &ParseOptions::default()) else { return };
    let cfg = LintConfig::default();
    let set = lint(cand, &orig, &cfg);
    for d in &set.diags {
        let _ = apply_suggestion(cand, d, &cfg);
    }
});
