//! Replays the fuzz seed corpora through the round-trip properties that the
//! fuzz targets assert, so they run under stable `cargo test`.

use std::path::{Path, PathBuf};

use semirad::oracle::{decode_history, to_bytes};
use semirad::scenario::{compare, Certificate, Scenario};

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files
}

#[test]
fn scenario_seeds_round_trip() {
    for p in seeds("scenario_toml") {
        let s = Scenario::from_toml(&std::fs::read_to_string(&p).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again.to_toml(), s.to_toml(), "{}", p.display());
        assert_eq!(again, s, "{}", p.display());
    }
}

#[test]
fn history_seeds_round_trip() {
    let mut decoded = Vec::new();
    for p in seeds("history_container") {
        let Ok(h) = decode_history(&std::fs::read(&p).unwrap()) else {
            continue;
        };
        decoded.push(p.file_name().unwrap().to_string_lossy().into_owned());
        let back = decode_history(&to_bytes(&h)).unwrap();
        assert_eq!(back.grid(), h.grid());
        assert_eq!(back.times(), h.times());
        for i in 0..h.times().len() {
            assert_eq!(back.rho(i), h.rho(i));
            assert_eq!(back.current(i), h.current(i));
        }
    }
    assert_eq!(decoded, ["be_linear.srch", "le_cubic.srch"]);
}

#[test]
fn certificate_seeds_round_trip() {
    let mut parsed = 0;
    for p in seeds("certificate_json") {
        if let Ok(c) = Certificate::from_json(&std::fs::read_to_string(&p).unwrap()) {
            assert!(compare(&c, &c, 0.0).unwrap().is_empty());
            assert_eq!(Certificate::from_json(&c.to_json()).unwrap(), c);
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}
