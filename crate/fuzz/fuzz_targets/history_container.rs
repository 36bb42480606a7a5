#![no_main]

use libfuzzer_sys::fuzz_target;
use semirad::oracle::{decode_history, to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(h) = decode_history(data) {
        let bytes = to_bytes(&h);
        let back = decode_history(&bytes).expect("decode re-encoded history");
        assert_eq!(back.times(), h.times());
        assert_eq!(back.grid(), h.grid());
    }
});
