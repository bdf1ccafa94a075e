//! Configuration, orchestration, CSV output and log-log fits.

mod config;
mod experiment;
mod fit;

pub use config::{Algorithm, ExperimentConfig};
pub use experiment::{
    build_spec, run_experiment, scaling_sweep, trace_path_for, write_csv, write_outputs,
    write_trace_csv, ExperimentOutput, Row, RowStatus, SweepOutput, TraceSet, CSV_HEADER,
    TRACE_HEADER,
};
pub use fit::{fit_loglog, fit_power_law, SlopeFit};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Process exit code for an error: I/O failures are generic, anything the
/// user can fix in the configuration or arguments maps to [`EXIT_CONFIG`].
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}
