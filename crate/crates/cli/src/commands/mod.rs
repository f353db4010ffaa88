pub mod batch;
pub mod compare;
pub mod convert;
pub mod evaluate;
pub mod solve;
pub mod synth;
pub mod validate;

use std::path::PathBuf;

use clap::Args;
use quadlin::model::ModelSummary;
use quadlin::patient_io::PatientCase;
use quadlin::solver::PlanSolution;

use crate::config::RunConfig;
use crate::output::Format;

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration (coefficients, solver, weighting, criteria mode).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Report formats; repeat or separate with commas. Defaults to csv,json.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
    /// Overrides the solver seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), self.seed)
    }
}

/// Builds the model for `prediction` and solves it under `cfg`.
pub fn plan(
    case: &PatientCase,
    prediction: &[f64],
    cfg: &RunConfig,
) -> anyhow::Result<(PlanSolution<f64>, ModelSummary)> {
    let weighted;
    let case = if cfg.voxel_weighting == Default::default() {
        case
    } else {
        let mut c = case.clone();
        c.set_voxel_weighting(cfg.voxel_weighting);
        weighted = c;
        &weighted
    };
    let model = quadlin::assemble_model(case, prediction, &cfg.coefficients)?;
    for w in &model.warnings {
        log::warn!("{}: {w}", case.id);
    }
    let solution = quadlin::solve(&model, &cfg.solver)?;
    Ok((solution, model.summary()))
}
