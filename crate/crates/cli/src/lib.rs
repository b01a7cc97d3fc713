//! Library side of the `otmap` binary: config schema, the `run` and `table`
//! commands. Kept separate from `main.rs` so integration tests can drive the
//! commands without spawning processes.

pub mod config;
pub mod run;
pub mod table;
