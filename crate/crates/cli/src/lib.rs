//! Scenario parsing, report serialization and subcommand drivers for `foliation-lab`.

pub mod report;
pub mod run;
pub mod scenario;
pub mod svg;

pub use run::{execute, run, Artifacts, Command, Overrides, RunError};
