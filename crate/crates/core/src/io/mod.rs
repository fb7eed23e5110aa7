//! Scenario files, run logs and the command-line interface.

mod cli;
mod log;
mod scenario;

pub use cli::{cli_main, exit_code, risk_bound, EXIT_INVALID, EXIT_IO, EXIT_OK};
pub use log::{
    csv_header, meta_json, plot_series, steps_csv, write_atomic, write_plot_data, write_run_log, Table,
    LOG_FORMAT_VERSION, META_FILE, STEPS_FILE,
};
pub use scenario::*;
