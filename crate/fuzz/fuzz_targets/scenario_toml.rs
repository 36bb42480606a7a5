#![no_main]

use libfuzzer_sys::fuzz_target;
use semirad::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Scenario::from_toml(text) {
        // A parsed scenario must survive its own serialization.
        let again = Scenario::from_toml(&s.to_toml()).expect("re-parse of serialized scenario");
        assert_eq!(again.to_toml(), s.to_toml());
        let _ = s.state();
        let _ = s.band_limit_reports();
    }
});
