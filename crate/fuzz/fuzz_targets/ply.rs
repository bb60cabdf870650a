#![no_main]
use libfuzzer_sys::fuzz_target;
use scenesynth::dataset::{decode_ply, encode_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = decode_ply(data, "fuzz.ply") {
        assert!(cloud.is_consistent());
        let again = decode_ply(&encode_ply(&cloud), "again.ply").expect("re-encoded cloud decodes");
        assert_eq!(again, cloud);
    }
});
