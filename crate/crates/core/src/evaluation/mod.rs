//! DVH points and curves, clinical criteria and plan comparison.

mod compare;
mod criteria;
mod dvh;
pub mod export;
pub mod svg;

use thiserror::Error;

pub use compare::{compare_dvh_points, DvhDifference, FiveNumberSummary};
pub use criteria::{
    aggregate_satisfaction, criteria_report, criteria_report_with, criterion_for, Comparison,
    CriteriaReport, Criterion, CriterionResult, PtvCriterionMode, RoiGroup, Satisfaction,
    SatisfactionRow, SatisfactionTable, ALL_OARS, ALL_ROIS, ALL_TARGETS, ORGAN_CRITERIA,
    TARGET_CRITERIA,
};
pub use dvh::{
    dvh_curve, dvh_point, dvh_point_detail, dvh_report, near_max_voxel_count, percentile_rank,
    weighted_mean_dose, DvhCurve, DvhPoint, DvhPointKind, DvhReport, RoiDvh, NEAR_MAX_VOLUME_CC,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("structure has no voxels")]
    EmptyStructure,
    #[error("voxel {voxel} out of range for a dose of {n_voxels} voxels")]
    VoxelOutOfRange { voxel: usize, n_voxels: usize },
    #[error("dose length {found} does not match expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("DVH bin width must be positive, got {0}")]
    InvalidBin(f64),
}
