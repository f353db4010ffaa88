use std::path::PathBuf;

use clap::Args;
use quadlin::solver::PlanSolution;
use serde::Serialize;

use super::{plan, CommonArgs};
use crate::output::{csv_writer, ensure_dir, load_case, opt_num, resolve_dose, write_json};
use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// `predicted`, a prediction set name or index, `reference`, or a dose file.
    #[arg(long, default_value = "predicted")]
    pub prediction: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize)]
pub struct ObjectiveFile {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
    pub total: f64,
    pub smoothed_total: f64,
    pub status: quadlin::SolveStatus,
    pub iterations: usize,
    pub optimality_measure: f64,
}

impl ObjectiveFile {
    pub fn of(s: &PlanSolution<f64>) -> Self {
        let b = &s.breakdown;
        Self {
            z1: b.z1,
            z2: b.z2,
            z3: b.z3,
            z4: b.z4,
            total: b.total,
            smoothed_total: s.diagnostics.smoothed_objective,
            status: s.diagnostics.status,
            iterations: s.diagnostics.iterations,
            optimality_measure: s.diagnostics.optimality_measure,
        }
    }
}

/// Writes `plan.csv`, `dose.csv`, `objective.json`, `diagnostics.csv` and
/// `diagnostics.json`.
pub fn write_solution(dir: &std::path::Path, s: &PlanSolution<f64>) -> anyhow::Result<()> {
    let mut w = csv_writer(&dir.join("plan.csv"))?;
    w.write_record(["beamlet_id", "intensity"])?;
    for (b, x) in s.fluence.iter().enumerate() {
        w.write_record([b.to_string(), x.to_string()])?;
    }
    w.flush()?;
    quadlin::patient_io::write_dose_csv(dir.join("dose.csv"), &s.dose)?;
    write_json(&dir.join("objective.json"), &ObjectiveFile::of(s))?;

    let mut w = csv_writer(&dir.join("diagnostics.csv"))?;
    w.write_record(["iteration", "objective", "optimality_measure", "step"])?;
    for row in &s.diagnostics.trace {
        w.write_record([
            row.iteration.to_string(),
            row.objective.to_string(),
            opt_num(row.optimality),
            row.step.to_string(),
        ])?;
    }
    w.flush()?;
    let mut d = s.diagnostics.clone();
    d.trace.clear();
    write_json(&dir.join("diagnostics.json"), &d)?;
    Ok(())
}

pub fn run(args: &SolveArgs) -> anyhow::Result<Outcome> {
    let cfg = args.common.run_config()?;
    let case = load_case(&args.bundle)?;
    let prediction = resolve_dose(&args.bundle, &case, &args.prediction)?;
    let (solution, summary) = plan(&case, &prediction, &cfg)?;
    let out = &args.common.out;
    ensure_dir(out)?;
    write_solution(out, &solution)?;
    write_json(&out.join("model_summary.json"), &summary)?;
    let d = &solution.diagnostics;
    log::info!(
        "{}: {:?} after {} iterations, objective {}",
        case.id,
        d.status,
        d.iterations,
        d.final_objective
    );
    if solution.converged() {
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "warning: solver stopped after {} iterations without meeting the tolerance (optimality {})",
            d.iterations, d.optimality_measure
        );
        Ok(Outcome::NotConverged)
    }
}
