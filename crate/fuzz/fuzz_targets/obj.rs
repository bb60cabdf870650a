#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = scenesynth::mesh::parse_obj(text) {
            // whatever parses must survive a write/read cycle
            let again = scenesynth::mesh::parse_obj(&mesh.to_obj()).expect("serialized mesh parses");
            assert_eq!(again.triangles, mesh.triangles);
        }
    }
});
