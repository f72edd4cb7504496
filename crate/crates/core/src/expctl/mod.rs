//! Experiment orchestration: configuration, replicated runs, sweeps,
//! persistence and figures.

mod config;
mod io;
mod report;
mod run;

pub use config::{
    default_schedule, DepthSection, DynamicsSection, ExperimentConfig, ExperimentSection, IbSection,
    InfoSection, NetworkSection, RuleSection, SampleSection,
};
pub use io::{
    read_run_log, write_beta_fits, write_curve, write_gradient_stats, write_info_points, write_joint,
    write_manifest, write_phase_reports, write_run_log, write_thresholds, write_with_digest,
};
pub use report::{gradients_svg, ib_svg, info_plane_svg, render_reports, sample_size_svg, ReportOutput};
pub use run::{
    aggregate, derive_seeds, median, run_seed, stats_epochs, AggregatePoint, Experiment, LayerBetaFit,
    RunFailure, RunLog, RunPlan, RunRecord,
};

use crate::error::Result;

/// Replicates the reference plan of `config`.
pub fn run_replicated(config: &ExperimentConfig) -> Result<RunLog> {
    let exp = Experiment::new(config.clone())?;
    exp.run_replicated(&exp.reference_plan())
}

pub fn depth_sweep(config: &ExperimentConfig) -> Result<Vec<RunLog>> {
    Experiment::new(config.clone())?.depth_sweep()
}

pub fn sample_size_sweep(config: &ExperimentConfig) -> Result<Vec<RunLog>> {
    Experiment::new(config.clone())?.sample_size_sweep()
}
