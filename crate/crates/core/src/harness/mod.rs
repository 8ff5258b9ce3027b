//! Config-driven Monte-Carlo experiments, metrics and capture files.

pub mod capture;
mod config;
mod metrics;
mod run;

pub use capture::{capture_gaps, format_capture, parse_capture, read_capture, write_capture};
pub use config::{parse_range, preset, ExperimentConfig, Scheme, PRESETS};
pub use metrics::{abs_error_cdf, quantile_sorted, MetricsReport, SchemeMetrics};
pub use run::{
    check_bank_covers, estimate_scheme, load_config_bank, process_capture_file, run_experiment,
    run_experiment_with_bank, smoothing_csv, smoothing_for_fraction, sweep_smoothing, ExperimentResult, Pipeline,
    RunRecord, SmoothingRow,
};
