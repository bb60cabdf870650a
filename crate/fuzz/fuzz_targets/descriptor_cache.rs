#![no_main]
use libfuzzer_sys::fuzz_target;
use scenesynth::features::DescriptorCache;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = DescriptorCache::parse(data) {
        let again = DescriptorCache::parse(cache.to_json().as_bytes()).expect("round trip");
        assert_eq!(again.descriptors, cache.descriptors);
    }
});
