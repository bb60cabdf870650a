#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(catalog) = scenesynth::catalog::AssetCatalog::parse_manifest(data, ".") {
        let json = catalog.to_manifest_json();
        let again = scenesynth::catalog::AssetCatalog::parse_manifest(json.as_bytes(), ".").expect("round trip");
        assert_eq!(again.records(), catalog.records());
    }
});
