//! Experiment harness: configuration, the case grid runner and file outputs.

mod config;
mod output;
mod runner;

pub use config::{parse_config, Args, ExperimentSpec, Preset, FULL_SCALE_CHANNELS, SCALED_CHANNELS};
pub use output::{
    read_summary, run_file_name, write_plotdata, write_run_csv, write_summary, PLOT_HEADER,
    PLOT_WINDOW, RUN_HEADER,
};
pub use runner::{run_case, CaseReport, CellFailure};
