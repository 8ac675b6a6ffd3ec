#![no_main]

use interact::cooccurrence::Codebook;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cb) = Codebook::parse(text) {
        assert_eq!(Codebook::parse(&cb.to_text()).expect("reparse"), cb);
    }
});
