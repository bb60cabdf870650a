#![no_main]
use libfuzzer_sys::fuzz_target;
use scenesynth::relations::{parse_relation_reply, SpatialRelation};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_relation_reply(data) {
        for raw in entries.into_iter().flatten() {
            if let Ok(rel) = SpatialRelation::try_from(&raw) {
                assert_eq!(SpatialRelation::try_from(&rel.to_raw()), Ok(rel));
            }
        }
    }
});
