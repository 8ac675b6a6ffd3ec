#![no_main]

use interact::pipeline::{parse_poses, write_poses};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = parse_poses(text, None) {
        // Anything accepted must survive its own serialization.
        let again = parse_poses(&write_poses(&ds), None).expect("written poses parse");
        assert_eq!(again.records.len(), ds.records.len());
    }
});
