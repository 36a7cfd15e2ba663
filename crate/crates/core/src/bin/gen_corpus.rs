//! Regenerates the checked-in fixtures: `cargo run -p pml-core --bin
//! gen-corpus [OUT_DIR]` (default `fixtures/`).  Output is deterministic —
//! randomized corpora use pinned seeds — so a clean checkout regenerates
//! byte-identical files.

use std::path::PathBuf;

use pml_core::bench::fixtures;

fn main() -> std::io::Result<()> {
    let out =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));
    for fixture in fixtures::all() {
        let dir = out.join(&fixture.name);
        fixture.save_dir(&dir)?;
        println!("wrote {} ({} corpus cases)", dir.display(), fixture.corpus.len());
    }
    Ok(())
}
