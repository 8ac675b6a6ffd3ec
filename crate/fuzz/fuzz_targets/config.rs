#![no_main]

use interact::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(text) {
        let _ = cfg.feature_hash();
        if let Ok(back) = cfg.to_toml() {
            assert_eq!(PipelineConfig::from_toml(&back).expect("reparse"), cfg);
        }
    }
});
