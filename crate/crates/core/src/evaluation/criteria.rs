use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dvh::{dvh_point_detail, DvhPointKind};
use super::EvalError;
use crate::patient_io::{Roi, RoiKind, StructureSet, VoxelGrid};
use crate::scalar::Scalar;

/// Direction of the target coverage criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtvCriterionMode {
    /// `D_99 ≥ threshold`: the target must be covered.
    #[default]
    Coverage,
    /// `D_99 ≤ threshold`, as the criteria table is literally printed.
    LiteralAtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

impl Comparison {
    /// Inclusive at equality.
    pub fn holds(&self, achieved: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => achieved <= threshold,
            Comparison::AtLeast => achieved >= threshold,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiGroup {
    Oar,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub point: DvhPointKind,
    pub comparison: Comparison,
    pub threshold_gy: f64,
}

/// Organ criteria by canonical ROI name.
pub const ORGAN_CRITERIA: [(&str, DvhPointKind, f64); 7] = [
    ("brainstem", DvhPointKind::D0_1cc, 50.0),
    ("spinal_cord", DvhPointKind::D0_1cc, 45.0),
    ("right_parotid", DvhPointKind::DMean, 26.0),
    ("left_parotid", DvhPointKind::DMean, 26.0),
    ("esophagus", DvhPointKind::DMean, 45.0),
    ("larynx", DvhPointKind::DMean, 45.0),
    ("mandible", DvhPointKind::D0_1cc, 73.5),
];

/// Target `D_99` thresholds by prescription level.
pub const TARGET_CRITERIA: [(f64, f64); 3] = [(56.0, 53.2), (63.0, 59.9), (70.0, 66.5)];

/// The criterion that applies to `roi`, if any.
pub fn criterion_for(roi: &Roi, mode: PtvCriterionMode) -> Option<(RoiGroup, Criterion)> {
    match roi.kind {
        RoiKind::Ptv { level_gy } => TARGET_CRITERIA
            .iter()
            .find(|(level, _)| *level == level_gy)
            .map(|&(_, threshold_gy)| {
                let comparison = match mode {
                    PtvCriterionMode::Coverage => Comparison::AtLeast,
                    PtvCriterionMode::LiteralAtMost => Comparison::AtMost,
                };
                (
                    RoiGroup::Target,
                    Criterion {
                        point: DvhPointKind::D99,
                        comparison,
                        threshold_gy,
                    },
                )
            }),
        _ => ORGAN_CRITERIA
            .iter()
            .find(|(name, _, _)| *name == roi.name)
            .map(|&(_, point, threshold_gy)| {
                (
                    RoiGroup::Oar,
                    Criterion {
                        point,
                        comparison: Comparison::AtMost,
                        threshold_gy,
                    },
                )
            }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub roi: String,
    pub group: RoiGroup,
    pub point: DvhPointKind,
    pub comparison: Comparison,
    pub threshold_gy: f64,
    pub achieved_gy: f64,
    pub satisfied: bool,
    pub volume_limited: bool,
}

/// Satisfied and applicable counts; `percent` is absent when nothing applies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Satisfaction {
    pub satisfied: usize,
    pub applicable: usize,
    pub percent: Option<f64>,
}

impl Satisfaction {
    pub fn from_counts(satisfied: usize, applicable: usize) -> Self {
        Self {
            satisfied,
            applicable,
            percent: (applicable > 0).then(|| satisfied as f64 / applicable as f64 * 100.0),
        }
    }

    fn add(&mut self, satisfied: bool) {
        *self = Self::from_counts(self.satisfied + usize::from(satisfied), self.applicable + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    pub mode: PtvCriterionMode,
    pub results: Vec<CriterionResult>,
    pub oars: Satisfaction,
    pub targets: Satisfaction,
    pub all: Satisfaction,
}

impl CriteriaReport {
    pub fn get(&self, roi: &str) -> Option<&CriterionResult> {
        self.results.iter().find(|r| r.roi == roi)
    }

    pub fn satisfied_count(&self) -> usize {
        self.all.satisfied
    }
}

/// Scores `dose` against the clinical criteria with target coverage read as `D_99 ≥ threshold`.
pub fn criteria_report<T: Scalar>(
    dose: &[T],
    structures: &StructureSet,
    grid: &VoxelGrid,
) -> Result<CriteriaReport, EvalError> {
    criteria_report_with(dose, structures, grid, PtvCriterionMode::default())
}

/// ROIs that are absent or have no voxels are left out of every denominator.
pub fn criteria_report_with<T: Scalar>(
    dose: &[T],
    structures: &StructureSet,
    grid: &VoxelGrid,
    mode: PtvCriterionMode,
) -> Result<CriteriaReport, EvalError> {
    let mut results = Vec::new();
    let (mut oars, mut targets, mut all) = Default::default();
    for roi in &structures.rois {
        if roi.voxels.is_empty() {
            continue;
        }
        let Some((group, c)) = criterion_for(roi, mode) else {
            continue;
        };
        let p = dvh_point_detail(dose, &roi.voxels, grid, c.point)?;
        let achieved_gy = p.gy.as_f64();
        let satisfied = c.comparison.holds(achieved_gy, c.threshold_gy);
        match group {
            RoiGroup::Oar => Satisfaction::add(&mut oars, satisfied),
            RoiGroup::Target => Satisfaction::add(&mut targets, satisfied),
        }
        Satisfaction::add(&mut all, satisfied);
        results.push(CriterionResult {
            roi: roi.name.clone(),
            group,
            point: c.point,
            comparison: c.comparison,
            threshold_gy: c.threshold_gy,
            achieved_gy,
            satisfied,
            volume_limited: p.volume_limited,
        });
    }
    Ok(CriteriaReport {
        mode,
        results,
        oars,
        targets,
        all,
    })
}

pub const ALL_OARS: &str = "All OARs";
pub const ALL_TARGETS: &str = "All Targets";
pub const ALL_ROIS: &str = "All ROIs";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatisfactionRow {
    pub label: String,
    #[serde(flatten)]
    pub satisfaction: Satisfaction,
}

/// Per-ROI satisfaction over a set of reports, followed by the pooled
/// `All OARs`, `All Targets` and `All ROIs` rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatisfactionTable {
    pub rows: Vec<SatisfactionRow>,
}

impl SatisfactionTable {
    pub fn get(&self, label: &str) -> Option<&Satisfaction> {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .map(|r| &r.satisfaction)
    }
}

/// Sort key placing organs in criteria-table order, then targets by level, then anything else.
fn roi_order(name: &str, group: RoiGroup) -> (usize, String) {
    match ORGAN_CRITERIA.iter().position(|(n, _, _)| *n == name) {
        Some(i) if group == RoiGroup::Oar => (i, String::new()),
        _ => (ORGAN_CRITERIA.len() + usize::from(group == RoiGroup::Oar), name.to_owned()),
    }
}

/// Pools criteria instances: a group row counts every applicable
/// (report, ROI) pair rather than averaging the per-ROI rows.
pub fn aggregate_satisfaction(reports: &[CriteriaReport]) -> SatisfactionTable {
    let mut per_roi: BTreeMap<(usize, String, String), Satisfaction> = BTreeMap::new();
    let (mut oars, mut targets, mut all) = Default::default();
    for report in reports {
        for r in &report.results {
            let (rank, tie) = roi_order(&r.roi, r.group);
            per_roi
                .entry((rank, tie, r.roi.clone()))
                .or_default()
                .add(r.satisfied);
            match r.group {
                RoiGroup::Oar => Satisfaction::add(&mut oars, r.satisfied),
                RoiGroup::Target => Satisfaction::add(&mut targets, r.satisfied),
            }
            Satisfaction::add(&mut all, r.satisfied);
        }
    }
    let mut rows: Vec<SatisfactionRow> = per_roi
        .into_iter()
        .map(|((_, _, label), satisfaction)| SatisfactionRow { label, satisfaction })
        .collect();
    for (label, satisfaction) in [(ALL_OARS, oars), (ALL_TARGETS, targets), (ALL_ROIS, all)] {
        rows.push(SatisfactionRow {
            label: label.to_owned(),
            satisfaction,
        });
    }
    SatisfactionTable { rows }
}
