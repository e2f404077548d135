//! Experiment orchestration: specs, learning-rate grid search over user
//! folds, multi-seed runs, persisted results and report tables.

mod grid;
mod report;
mod run;
mod spec;
mod threads;

pub use grid::{
    cross_validate, grid_search_client_lr, grid_search_server_lr, pick_best, GridPoint, GridResult,
};
pub use report::{
    build_rows, emit_report, format_cell, parse_cell, render_csv, render_results_csv,
    write_results_csv, ReportRow, REPORT_CSV, REPORT_JSON,
};
pub use run::{
    evaluate_model, load_users, read_outcome, run_experiment, split_for_seed, train_method,
    write_outputs, write_spec, ExperimentOutcome, Rates, ResultRecord, RunFailure, SeedGrid,
    SeedSplit, Timing, Trained, TrainedModel, GRID_JSON, RESULTS_CSV, RESULTS_JSON, SPEC_JSON,
    TIMINGS_JSON,
};
pub use spec::{default_lr_grid, DatasetSource, ExperimentSpec, GridSearch, Method};
pub use threads::{parse_threads, threads_from_env, with_threads, THREADS_ENV};
