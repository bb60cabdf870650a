#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(out) = scenesynth::metrics::parse_score_reply(data) {
        assert!(out.score <= 100);
    }
});
