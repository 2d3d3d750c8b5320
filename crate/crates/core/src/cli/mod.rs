//! Configuration-driven runner behind the `berry-det` binary.

mod config;
mod output;
mod run;

pub use config::{Checks, Output, RunConfig, DEMO_CONFIG};
pub use output::{emit_csv, emit_phases_csv, format_sig, CSV_HEADER};
pub use run::{run_config, CheckResult, Command, ReportRow, RunReport, Timing};
