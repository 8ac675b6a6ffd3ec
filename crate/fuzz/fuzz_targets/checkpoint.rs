#![no_main]

use interact::pipeline::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&ckpt.to_bytes()).expect("re-encoded checkpoint loads");
        assert!(again == ckpt);
    }
});
