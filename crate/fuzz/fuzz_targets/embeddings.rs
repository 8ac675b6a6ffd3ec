#![no_main]

use interact::features::{parse_provider, EmbeddingQuery, Site};
use interact::Point;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(provider) = parse_provider(text) else { return };
    let q = EmbeddingQuery {
        video: 0,
        frame: 0,
        person: 0,
        site: Site::Body,
        center: Point::new(0.0, 0.0),
        size: 32,
    };
    if let Ok(v) = provider.embed(&q) {
        assert_eq!(v.len(), provider.dim());
    }
});
