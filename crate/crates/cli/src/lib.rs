//! Command implementations behind the `transdeno` binary.

pub mod commands;

pub use commands::exit_code;
