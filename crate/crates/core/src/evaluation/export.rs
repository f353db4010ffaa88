//! CSV writers for evaluation reports. All files carry a header row.

use std::io::Write;

use super::compare::DvhDifference;
use super::criteria::{CriteriaReport, SatisfactionTable};
use super::dvh::DvhReport;

pub type CsvResult = Result<(), csv::Error>;

fn opt(v: Option<f64>) -> String {
    v.map(|p| p.to_string()).unwrap_or_default()
}

/// `roi,roi_kind,point,dose_gy,volume_limited`
pub fn write_dvh_points_csv<W: Write>(report: &DvhReport, w: W) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["roi", "roi_kind", "point", "dose_gy", "volume_limited"])?;
    for roi in &report.rois {
        for p in &roi.points {
            out.write_record([
                roi.roi.as_str(),
                roi.kind.tag(),
                p.kind.label(),
                &p.gy.to_string(),
                &p.volume_limited.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Long format: `roi,dose_gy,volume_fraction`
pub fn write_dvh_curves_csv<W: Write>(report: &DvhReport, w: W) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["roi", "dose_gy", "volume_fraction"])?;
    for roi in &report.rois {
        if let Some(c) = &roi.curve {
            for (d, v) in c.dose_gy.iter().zip(&c.volume_fraction) {
                out.write_record([roi.roi.as_str(), &d.to_string(), &v.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per criterion.
pub fn write_criteria_csv<W: Write>(report: &CriteriaReport, w: W) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "roi",
        "group",
        "point",
        "comparison",
        "threshold_gy",
        "achieved_gy",
        "satisfied",
        "volume_limited",
    ])?;
    for r in &report.results {
        let group = match r.group {
            super::RoiGroup::Oar => "oar",
            super::RoiGroup::Target => "target",
        };
        out.write_record([
            r.roi.as_str(),
            group,
            r.point.label(),
            r.comparison.symbol(),
            &r.threshold_gy.to_string(),
            &r.achieved_gy.to_string(),
            &r.satisfied.to_string(),
            &r.volume_limited.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `label,satisfied,applicable,percent`; the percentage is empty when nothing applies.
pub fn write_satisfaction_csv<W: Write>(table: &SatisfactionTable, w: W) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "satisfied", "applicable", "percent"])?;
    for row in &table.rows {
        let s = &row.satisfaction;
        out.write_record([
            row.label.as_str(),
            &s.satisfied.to_string(),
            &s.applicable.to_string(),
            &opt(s.percent),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `roi,point,plan_gy,reference_gy,signed_diff_gy,abs_diff_gy`
pub fn write_differences_csv<W: Write>(diffs: &[DvhDifference], w: W) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["roi", "point", "plan_gy", "reference_gy", "signed_diff_gy", "abs_diff_gy"])?;
    for d in diffs {
        out.write_record([
            d.roi.as_str(),
            d.point.label(),
            &d.plan_gy.to_string(),
            &d.reference_gy.to_string(),
            &d.signed_gy.to_string(),
            &d.abs_gy.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
