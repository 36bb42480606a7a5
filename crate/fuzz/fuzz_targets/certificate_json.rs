#![no_main]

use libfuzzer_sys::fuzz_target;
use semirad::scenario::{compare, Certificate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Certificate::from_json(text) {
        let _ = compare(&c, &c, 0.0);
        let _ = Certificate::from_json(&c.to_json());
    }
});
