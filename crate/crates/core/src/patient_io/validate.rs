use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use super::{PatientCase, RoiKind, MAX_DOSE_OARS, MEAN_DOSE_OARS};
use crate::scalar::Scalar;

/// One invariant violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    InvalidGrid,
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    VoxelOutOfRange { roi: String, voxel: usize },
    DuplicateVoxel { roi: String, voxel: usize },
    DuplicateRoi { roi: String },
    InvalidRoiKind { roi: String, kind: String },
    InvalidLevel { roi: String, level_gy: f64 },
    NegativeDose { field: String, voxel: usize },
    NonFiniteDose { field: String, voxel: usize },
    NonPositiveWeight { voxel: usize },
    MaskOutOfRange { voxel: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::InvalidGrid => f.write_str("grid dims and voxel sizes must be positive"),
            Finding::LengthMismatch { field, expected, found } => {
                write!(f, "{field} has length {found}, expected {expected}")
            }
            Finding::VoxelOutOfRange { roi, voxel } => {
                write!(f, "roi `{roi}` references voxel {voxel} outside the grid")
            }
            Finding::DuplicateVoxel { roi, voxel } => {
                write!(f, "roi `{roi}` lists voxel {voxel} more than once")
            }
            Finding::DuplicateRoi { roi } => write!(f, "roi `{roi}` declared twice"),
            Finding::InvalidRoiKind { roi, kind } => {
                write!(f, "roi `{roi}` cannot be of kind {kind}")
            }
            Finding::InvalidLevel { roi, level_gy } => {
                write!(f, "roi `{roi}` has invalid prescription level {level_gy}")
            }
            Finding::NegativeDose { field, voxel } => {
                write!(f, "{field} is negative at voxel {voxel}")
            }
            Finding::NonFiniteDose { field, voxel } => {
                write!(f, "{field} is not finite at voxel {voxel}")
            }
            Finding::NonPositiveWeight { voxel } => {
                write!(f, "voxel weight at {voxel} is not strictly positive")
            }
            Finding::MaskOutOfRange { voxel } => {
                write!(f, "feasible mask references voxel {voxel} outside the grid")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiSummary {
    pub name: String,
    pub kind: RoiKind,
    pub voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub id: String,
    pub n_voxels: usize,
    pub n_beamlets: usize,
    pub nnz: usize,
    pub density: f64,
    pub rois: Vec<RoiSummary>,
    pub predicted_range_gy: Option<[f64; 2]>,
    pub reference_range_gy: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub summary: CaseSummary,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Lists every invariant violation of `case`. Never fails.
pub fn validate_case<T: Scalar>(case: &PatientCase<T>) -> ValidationReport {
    let mut findings = Vec::new();
    if !case.grid.is_valid() {
        findings.push(Finding::InvalidGrid);
    }
    let n = case.grid.n_voxels();

    if case.influence.n_voxels() != n {
        findings.push(Finding::LengthMismatch {
            field: "influence rows".into(),
            expected: n,
            found: case.influence.n_voxels(),
        });
    }

    let mut names = HashSet::new();
    for roi in &case.structures.rois {
        if !names.insert(roi.name.as_str()) {
            findings.push(Finding::DuplicateRoi { roi: roi.name.clone() });
        }
        match roi.kind {
            RoiKind::OarMax if !MAX_DOSE_OARS.contains(&roi.name.as_str()) => {
                findings.push(Finding::InvalidRoiKind {
                    roi: roi.name.clone(),
                    kind: roi.kind.tag().into(),
                });
            }
            RoiKind::OarMean if !MEAN_DOSE_OARS.contains(&roi.name.as_str()) => {
                findings.push(Finding::InvalidRoiKind {
                    roi: roi.name.clone(),
                    kind: roi.kind.tag().into(),
                });
            }
            RoiKind::Ptv { level_gy } if !(level_gy.is_finite() && level_gy > 0.0) => {
                findings.push(Finding::InvalidLevel {
                    roi: roi.name.clone(),
                    level_gy,
                });
            }
            _ => {}
        }
        let mut seen = HashSet::with_capacity(roi.voxels.len());
        let mut reported = BTreeSet::new();
        for &v in &roi.voxels {
            if v >= n {
                findings.push(Finding::VoxelOutOfRange {
                    roi: roi.name.clone(),
                    voxel: v,
                });
            }
            if !seen.insert(v) && reported.insert(v) {
                findings.push(Finding::DuplicateVoxel {
                    roi: roi.name.clone(),
                    voxel: v,
                });
            }
        }
    }

    check_dose(&mut findings, "predicted_dose", &case.predicted_dose, n);
    if let Some(reference) = &case.reference_dose {
        check_dose(&mut findings, "reference_dose", reference, n);
    }

    if case.voxel_weights.len() != n {
        findings.push(Finding::LengthMismatch {
            field: "voxel_weights".into(),
            expected: n,
            found: case.voxel_weights.len(),
        });
    }
    if let Some(v) = case
        .voxel_weights
        .iter()
        .position(|w| !(w.is_finite() && *w > T::zero()))
    {
        findings.push(Finding::NonPositiveWeight { voxel: v });
    }
    if let Some(mask) = &case.feasible_mask {
        if let Some(&v) = mask.iter().find(|&&v| v >= n) {
            findings.push(Finding::MaskOutOfRange { voxel: v });
        }
    }

    ValidationReport {
        findings,
        summary: summarize(case),
    }
}

fn check_dose<T: Scalar>(findings: &mut Vec<Finding>, field: &str, dose: &[T], n: usize) {
    if dose.len() != n {
        findings.push(Finding::LengthMismatch {
            field: field.into(),
            expected: n,
            found: dose.len(),
        });
    }
    if let Some(v) = dose.iter().position(|d| !d.is_finite()) {
        findings.push(Finding::NonFiniteDose {
            field: field.into(),
            voxel: v,
        });
    }
    if let Some(v) = dose.iter().position(|d| *d < T::zero()) {
        findings.push(Finding::NegativeDose {
            field: field.into(),
            voxel: v,
        });
    }
}

fn range<T: Scalar>(dose: &[T]) -> Option<[f64; 2]> {
    let mut it = dose.iter().filter(|d| d.is_finite()).map(|d| d.as_f64());
    let first = it.next()?;
    Some(it.fold([first, first], |[lo, hi], d| [lo.min(d), hi.max(d)]))
}

fn summarize<T: Scalar>(case: &PatientCase<T>) -> CaseSummary {
    CaseSummary {
        id: case.id.clone(),
        n_voxels: case.grid.n_voxels(),
        n_beamlets: case.influence.n_beamlets(),
        nnz: case.influence.nnz(),
        density: case.influence.density(),
        rois: case
            .structures
            .rois
            .iter()
            .map(|r| RoiSummary {
                name: r.name.clone(),
                kind: r.kind,
                voxels: r.voxels.len(),
            })
            .collect(),
        predicted_range_gy: range(&case.predicted_dose),
        reference_range_gy: case.reference_dose.as_deref().and_then(range),
    }
}
