#![no_main]

use interact::pipeline::{synth_generate, SyntheticSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SyntheticSpec::from_toml(text) {
        if spec.frames[1] <= 200 && spec.classes.len() <= 8 {
            let _ = synth_generate(&spec, 2, 0, 0);
        }
    }
});
