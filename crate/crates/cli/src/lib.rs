//! Library half of the `cavi-lab` binary: subcommand implementations and the
//! oracle comparison suites.

#[cfg(feature = "oracle-check")]
pub mod checks;
pub mod commands;
