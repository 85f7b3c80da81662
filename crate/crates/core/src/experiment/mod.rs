//! Experiment orchestration: train every protocol on seeded scenarios,
//! evaluate the deployed system against the Type-I baseline, and write
//! result tables, traces and run comparisons.

mod config;
mod run;
mod table;

pub use config::{default_encoder_id, ExperimentConfig, ScenarioSpec};
pub use run::{
    evaluate_links, run_experiment, train_systems, DeployedPair, ExperimentOutcome, MeanMetrics, TrainedSystems,
    FAILED_DIR,
};
pub use table::{
    compare_methods, compare_runs, compare_tables, emit_report, gain_table_text, sgcs_table_text, trace_text,
    CellDelta, GainRow, ReportFormat, ResultTable, RunDiff, SgcsCell, TraceSeries, DEFAULT_DIFF_THRESHOLD,
    RESULT_FILE,
};
