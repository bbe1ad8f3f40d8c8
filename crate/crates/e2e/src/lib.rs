//! Holds the end-to-end acceptance suite in `tests/acceptance.rs`; run it
//! with `cargo test -p roadcheck-e2e`.
