use std::path::{Path, PathBuf};

use clap::Args;
use quadlin::evaluation::export::{write_criteria_csv, write_dvh_curves_csv, write_dvh_points_csv};
use quadlin::evaluation::svg::render_dvh_svg;
use quadlin::evaluation::{criteria_report_with, dvh_report, CriteriaReport, DvhReport};
use quadlin::patient_io::PatientCase;

use super::CommonArgs;
use crate::config::RunConfig;
use crate::output::{create, ensure_dir, formats, load_case, read_dose_file, resolve_dose, write_json, write_text, Format};
use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Dose file to evaluate (sparse `voxel_id,dose_gy` or dense `dose_gy`).
    #[arg(long, conflicts_with = "prediction")]
    pub dose: Option<PathBuf>,
    /// Dose selector used when no file is given: `predicted`, a set name or
    /// index, or `reference`.
    #[arg(long, default_value = "predicted")]
    pub prediction: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn reports(case: &PatientCase, dose: &[f64], cfg: &RunConfig) -> anyhow::Result<(CriteriaReport, DvhReport)> {
    let criteria = criteria_report_with(dose, &case.structures, &case.grid, cfg.ptv_criteria)?;
    let dvh = dvh_report(dose, &case.structures, &case.grid, Some(cfg.dvh_bin_gy))?;
    Ok((criteria, dvh))
}

/// `criteria.json` and `dvh_points.csv`, plus `criteria.csv` and
/// `dvh_curves.csv` for csv, `dvh.json` for json and `dvh.svg` for svg.
pub fn write_reports(
    dir: &Path,
    title: &str,
    criteria: &CriteriaReport,
    dvh: &DvhReport,
    requested: &[Format],
) -> anyhow::Result<()> {
    write_json(&dir.join("criteria.json"), criteria)?;
    write_dvh_points_csv(dvh, create(&dir.join("dvh_points.csv"))?)?;
    let fmts = formats(requested);
    if fmts.contains(&Format::Csv) {
        write_criteria_csv(criteria, create(&dir.join("criteria.csv"))?)?;
        write_dvh_curves_csv(dvh, create(&dir.join("dvh_curves.csv"))?)?;
    }
    if fmts.contains(&Format::Json) {
        write_json(&dir.join("dvh.json"), dvh)?;
    }
    if fmts.contains(&Format::Svg) {
        let curves: Vec<(String, &quadlin::evaluation::DvhCurve)> = dvh
            .rois
            .iter()
            .filter_map(|r| r.curve.as_ref().map(|c| (r.roi.clone(), c)))
            .collect();
        write_text(&dir.join("dvh.svg"), &render_dvh_svg(title, &curves))?;
    }
    Ok(())
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let cfg = args.common.run_config()?;
    let case = load_case(&args.bundle)?;
    let dose = match &args.dose {
        Some(p) => read_dose_file(p, case.n_voxels())?,
        None => resolve_dose(&args.bundle, &case, &args.prediction)?,
    };
    let (criteria, dvh) = reports(&case, &dose, &cfg)?;
    ensure_dir(&args.common.out)?;
    write_reports(&args.common.out, &format!("DVH: {}", case.id), &criteria, &dvh, &args.common.format)?;
    println!(
        "{}: {} of {} criteria satisfied",
        case.id, criteria.all.satisfied, criteria.all.applicable
    );
    Ok(Outcome::Success)
}
