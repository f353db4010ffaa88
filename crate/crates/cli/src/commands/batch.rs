use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use quadlin::evaluation::{aggregate_satisfaction, criteria_report_with, CriteriaReport, Satisfaction};
use quadlin::patient_io::PatientCase;
use quadlin::solver::PlanSolution;
use rayon::prelude::*;
use serde::Deserialize;

use super::{plan, CommonArgs};
use crate::config::RunConfig;
use crate::output::{csv_writer, ensure_dir, load_case, opt_num, resolve_dose};
use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    /// JSON manifest listing patient bundles and prediction selectors.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Batch manifest. Bundle paths are relative to the manifest's directory.
///
/// ```json
/// {"patients": ["pt_1", {"bundle": "pt_2", "predictions": ["predicted"]}],
///  "predictions": ["predicted", "model_b"]}
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub patients: Vec<PatientEntry>,
    /// Selectors applied to every patient without its own list.
    #[serde(default = "default_predictions")]
    pub predictions: Vec<String>,
}

fn default_predictions() -> Vec<String> {
    vec!["predicted".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PatientEntry {
    Path(String),
    Detailed {
        bundle: String,
        predictions: Option<Vec<String>>,
    },
}

impl Manifest {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.patients.is_empty() {
            bail!("manifest {} lists no patients", path.display());
        }
        Ok(m)
    }

    /// `(bundle, selectors)` per patient in manifest order.
    pub fn entries(&self) -> Vec<(String, Vec<String>)> {
        self.patients
            .iter()
            .map(|p| match p {
                PatientEntry::Path(b) => (b.clone(), self.predictions.clone()),
                PatientEntry::Detailed { bundle, predictions } => (
                    bundle.clone(),
                    predictions.clone().unwrap_or_else(|| self.predictions.clone()),
                ),
            })
            .collect()
    }
}

struct CellResult {
    patient: String,
    solution: PlanSolution<f64>,
    prediction_report: CriteriaReport,
    plan_report: CriteriaReport,
    reference_report: Option<CriteriaReport>,
}

struct Failure {
    patient_index: usize,
    bundle: String,
    prediction: String,
    stage: &'static str,
    message: String,
}

fn run_cell(bundle: &Path, case: &PatientCase, selector: &str, cfg: &RunConfig) -> anyhow::Result<CellResult> {
    let prediction = resolve_dose(bundle, case, selector)?;
    let (solution, _) = plan(case, &prediction, cfg)?;
    let report = |d: &[f64]| criteria_report_with(d, &case.structures, &case.grid, cfg.ptv_criteria);
    Ok(CellResult {
        patient: case.id.clone(),
        prediction_report: report(&prediction)?,
        plan_report: report(&solution.dose)?,
        reference_report: case.reference_dose.as_ref().map(|r| report(r)).transpose()?,
        solution,
    })
}

fn pct(s: &Satisfaction) -> String {
    opt_num(s.percent)
}

/// Solves and evaluates every cell, then writes `batch_summary.csv`,
/// `criteria_matrix.csv` and `failures.csv`. Rows follow manifest order
/// whatever the worker count.
pub fn run(args: &BatchArgs) -> anyhow::Result<Outcome> {
    let cfg = args.common.run_config()?;
    let manifest = Manifest::from_file(&args.manifest)?;
    let root = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let entries = manifest.entries();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build()?;

    let (cases, cells): (Vec<_>, Vec<_>) = pool.install(|| {
        let cases: Vec<anyhow::Result<PatientCase>> =
            entries.par_iter().map(|(b, _)| load_case(&root.join(b))).collect();
        let jobs: Vec<(usize, &str)> = entries
            .iter()
            .enumerate()
            .filter(|(p, _)| cases[*p].is_ok())
            .flat_map(|(p, (_, sels))| sels.iter().map(move |s| (p, s.as_str())))
            .collect();
        let cells: Vec<(usize, String, anyhow::Result<CellResult>)> = jobs
            .par_iter()
            .map(|&(p, sel)| {
                let case = cases[p].as_ref().expect("loaded");
                let res = run_cell(&root.join(&entries[p].0), case, sel, &cfg);
                (p, sel.to_owned(), res)
            })
            .collect();
        (cases, cells)
    });

    let mut failures = Vec::new();
    for (p, ((bundle, _), case)) in entries.iter().zip(&cases).enumerate() {
        if let Err(e) = case {
            log::error!("{bundle}: {e:#}");
            failures.push(Failure {
                patient_index: p,
                bundle: bundle.clone(),
                prediction: "*".into(),
                stage: "load",
                message: format!("{e:#}"),
            });
        }
    }
    let mut ok = Vec::new();
    for (p, sel, res) in cells {
        match res {
            Ok(r) => ok.push((p, sel, r)),
            Err(e) => {
                log::error!("{} / {sel}: {e:#}", entries[p].0);
                failures.push(Failure {
                    patient_index: p,
                    bundle: entries[p].0.clone(),
                    prediction: sel,
                    stage: "cell",
                    message: format!("{e:#}"),
                });
            }
        }
    }

    failures.sort_by_key(|f| f.patient_index);

    let out = &args.common.out;
    ensure_dir(out)?;
    let mut w = csv_writer(&out.join("batch_summary.csv"))?;
    w.write_record([
        "patient",
        "bundle",
        "prediction",
        "status",
        "iterations",
        "z1",
        "z2",
        "z3",
        "z4",
        "total",
        "optimality_measure",
        "prediction_oars_pct",
        "prediction_targets_pct",
        "prediction_all_pct",
        "plan_oars_pct",
        "plan_targets_pct",
        "plan_all_pct",
    ])?;
    for (p, sel, r) in &ok {
        let d = &r.solution.diagnostics;
        let b = &r.solution.breakdown;
        let status = serde_json::to_value(d.status)?;
        w.write_record([
            r.patient.clone(),
            entries[*p].0.clone(),
            sel.clone(),
            status.as_str().unwrap_or_default().to_owned(),
            d.iterations.to_string(),
            b.z1.to_string(),
            b.z2.to_string(),
            b.z3.to_string(),
            b.z4.to_string(),
            b.total.to_string(),
            d.optimality_measure.to_string(),
            pct(&r.prediction_report.oars),
            pct(&r.prediction_report.targets),
            pct(&r.prediction_report.all),
            pct(&r.plan_report.oars),
            pct(&r.plan_report.targets),
            pct(&r.plan_report.all),
        ])?;
    }
    w.flush()?;

    let collect = |f: &dyn Fn(&CellResult) -> Option<&CriteriaReport>| -> Vec<CriteriaReport> {
        ok.iter().filter_map(|(_, _, r)| f(r).cloned()).collect()
    };
    let prediction = aggregate_satisfaction(&collect(&|r| Some(&r.prediction_report)));
    let planned = aggregate_satisfaction(&collect(&|r| Some(&r.plan_report)));
    let references = collect(&|r| r.reference_report.as_ref());
    let reference = (!references.is_empty()).then(|| aggregate_satisfaction(&references));
    let mut w = csv_writer(&out.join("criteria_matrix.csv"))?;
    let mut header = vec!["label", "prediction", "plan"];
    if reference.is_some() {
        header.push("reference");
    }
    w.write_record(&header)?;
    for row in &planned.rows {
        let mut rec = vec![
            row.label.clone(),
            opt_num(prediction.get(&row.label).and_then(|s| s.percent)),
            opt_num(row.satisfaction.percent),
        ];
        if let Some(t) = &reference {
            rec.push(opt_num(t.get(&row.label).and_then(|s| s.percent)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("failures.csv"))?;
    w.write_record(["bundle", "prediction", "stage", "error"])?;
    for f in &failures {
        w.write_record([&f.bundle, &f.prediction, f.stage, &f.message])?;
    }
    w.flush()?;

    eprintln!("{} cell(s) solved, {} failure(s)", ok.len(), failures.len());
    if ok.is_empty() {
        bail!("no cell succeeded");
    }
    Ok(Outcome::Success)
}
