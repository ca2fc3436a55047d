//! Front end for the functional Cox model: dataset files, run
//! configuration, reports, and the `fit`, `test` and `simulate` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{cmd_fit, cmd_simulate, cmd_test};
pub use config::FitConfig;
pub use error::{CliError, Result};
pub use io::{read_dataset, write_dataset, Dataset};
