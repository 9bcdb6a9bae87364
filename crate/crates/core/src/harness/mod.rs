//! Experiment orchestration: configuration, the evaluation grid, pool
//! sweeps and trajectory extraction.

mod config;
mod experiment;
pub mod plot;
mod report;

pub use config::{DataSource, ExperimentConfig, DEFAULT_STATIONS};
pub use experiment::{
    run_experiment, run_experiment_on, ArchivedCell, Cell, CellFailure, EvalReport, ExperimentOutput, ForecastArchive,
    ForecastRecord, ReportRow, NO_RETRIEVAL, OVERALL, REPORT_HEADER,
};
pub use report::{
    emit_trajectories, sweep_pool_size, sweep_pool_size_on, PoolSweep, SweepRow, Trajectory, TrajectoryRow,
    SWEEP_HEADER,
};
