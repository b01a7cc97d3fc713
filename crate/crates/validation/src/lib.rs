//! Holds the acceptance suite in `tests/acceptance.rs`. Kept as its own
//! package so `cargo test --workspace` runs it after every other target.
