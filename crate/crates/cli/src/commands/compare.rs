use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use quadlin::evaluation::svg::render_band_svg;
use quadlin::evaluation::{
    aggregate_satisfaction, compare_dvh_points, criteria_report_with, DvhDifference, DvhPointKind,
    FiveNumberSummary,
};
use serde::Serialize;

use super::CommonArgs;
use crate::output::{csv_writer, ensure_dir, formats, load_case, opt_num, resolve_dose, write_json, write_text, Format};
use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Dose source as LABEL=SELECTOR or SELECTOR (a dose file, `predicted`,
    /// `reference`, or a prediction set). At least two; the first is the baseline.
    #[arg(long = "dose", required = true, num_args = 1)]
    pub doses: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize)]
struct SourceDiffs<'a> {
    label: &'a str,
    differences: &'a [DvhDifference],
}

fn parse_source(raw: &str) -> (String, String) {
    match raw.split_once('=') {
        Some((l, s)) if !l.is_empty() => (l.to_owned(), s.to_owned()),
        _ => (raw.to_owned(), raw.to_owned()),
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `dvh_differences.csv` (values per source, then signed and absolute
/// differences of every later source against the first) and
/// `satisfaction_comparison.csv` (percentages per source).
pub fn run(args: &CompareArgs) -> anyhow::Result<Outcome> {
    if args.doses.len() < 2 {
        bail!("compare needs at least two --dose sources");
    }
    let cfg = args.common.run_config()?;
    let case = load_case(&args.bundle)?;
    let sources: Vec<(String, String)> = args.doses.iter().map(|d| parse_source(d)).collect();
    let mut seen = BTreeSet::new();
    for (label, _) in &sources {
        if !seen.insert(label) {
            bail!("duplicate source label `{label}`");
        }
    }
    let doses = sources
        .iter()
        .map(|(_, sel)| resolve_dose(&args.bundle, &case, sel))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let base = &doses[0];
    let diffs = doses[1..]
        .iter()
        .map(|d| compare_dvh_points(d, base, &case.structures, &case.grid))
        .collect::<Result<Vec<_>, _>>()?;

    let out = &args.common.out;
    ensure_dir(out)?;
    let mut w = csv_writer(&out.join("dvh_differences.csv"))?;
    let mut header = vec!["roi".to_string(), "point".to_string()];
    header.extend(sources.iter().map(|(l, _)| format!("gy_{l}")));
    for (l, _) in &sources[1..] {
        header.push(format!("signed_diff_{l}"));
        header.push(format!("abs_diff_{l}"));
    }
    w.write_record(&header)?;
    for (i, first) in diffs[0].iter().enumerate() {
        let mut row = vec![first.roi.clone(), first.point.label().to_string(), first.reference_gy.to_string()];
        row.extend(diffs.iter().map(|d| d[i].plan_gy.to_string()));
        for d in &diffs {
            row.push(d[i].signed_gy.to_string());
            row.push(d[i].abs_gy.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let tables = doses
        .iter()
        .map(|d| {
            let r = criteria_report_with(d, &case.structures, &case.grid, cfg.ptv_criteria)?;
            Ok(aggregate_satisfaction(&[r]))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut w = csv_writer(&out.join("satisfaction_comparison.csv"))?;
    let mut header = vec!["label".to_string(), "applicable".to_string()];
    header.extend(sources.iter().map(|(l, _)| l.clone()));
    w.write_record(&header)?;
    for row in &tables[0].rows {
        let mut rec = vec![row.label.clone(), row.satisfaction.applicable.to_string()];
        rec.extend(tables.iter().map(|t| opt_num(t.get(&row.label).and_then(|s| s.percent))));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let fmts = formats(&args.common.format);
    if fmts.contains(&Format::Json) {
        let per: Vec<SourceDiffs> = sources[1..]
            .iter()
            .zip(&diffs)
            .map(|((label, _), d)| SourceDiffs { label, differences: d })
            .collect();
        write_json(&out.join("dvh_differences.json"), &per)?;
    }
    if fmts.contains(&Format::Svg) {
        for ((label, _), d) in sources[1..].iter().zip(&diffs) {
            let bands: Vec<(String, FiveNumberSummary)> = DvhPointKind::ALL
                .iter()
                .filter_map(|&k| {
                    let vals: Vec<f64> = d.iter().filter(|x| x.point == k).map(|x| x.signed_gy).collect();
                    FiveNumberSummary::of(&vals).map(|s| (k.label().to_string(), s))
                })
                .collect();
            let title = format!("{label} minus {}", sources[0].0);
            write_text(
                &out.join(format!("dvh_differences_{}.svg", file_safe(label))),
                &render_band_svg(&title, "Difference (Gy)", &bands),
            )?;
        }
    }
    Ok(Outcome::Success)
}
