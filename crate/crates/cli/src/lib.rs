//! Library half of the `dfcaptcha` binary, so commands can be tested
//! without spawning a process.

pub mod catalog_cmd;
pub mod config;
pub mod io;
pub mod run;

pub use io::{CliError, CliResult};
