#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = scenesynth::pipeline::PipelineConfig::from_toml(text, std::path::Path::new("/fuzz"), "fuzz.toml") {
            let _ = config.validate();
        }
    }
});
