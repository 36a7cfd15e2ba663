//! Guards the checked-in fixture files against drift: regenerating them
//! from the oracle generators must reproduce the repository contents
//! byte for byte.  After changing a generator, run
//! `cargo run -p pml-core --bin gen-corpus` and commit the result.

use std::path::PathBuf;

use pml_core::bench::{fixtures, run_fixture, Fixture};

fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn checked_in_fixtures_match_their_generators() {
    for generated in fixtures::all() {
        let dir = fixtures_root().join(&generated.name);
        let on_disk = Fixture::load_dir(&generated.name, &dir)
            .unwrap_or_else(|e| panic!("loading {}: {e}", dir.display()));
        assert_eq!(on_disk, generated, "{} drifted from its generator", generated.name);
    }
}

#[test]
fn checked_in_fixtures_pass_against_the_engine() {
    for generated in fixtures::all() {
        let dir = fixtures_root().join(&generated.name);
        let fixture = Fixture::load_dir(&generated.name, &dir).unwrap();
        let report = run_fixture(&fixture).unwrap();
        assert!(report.passed(), "{report}");
    }
}
