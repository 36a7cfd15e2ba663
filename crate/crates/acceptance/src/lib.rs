//! Nothing lives here: this crate exists for its `tests/acceptance.rs`
//! target, the release gate that exercises the engine end to end.  Run it
//! with `cargo test -p pml-acceptance --test acceptance`.
