use serde::Serialize;

use super::dvh::{dvh_point, DvhPointKind};
use super::EvalError;
use crate::patient_io::{StructureSet, VoxelGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvhDifference {
    pub roi: String,
    pub point: DvhPointKind,
    pub plan_gy: f64,
    pub reference_gy: f64,
    /// `plan - reference`.
    pub signed_gy: f64,
    pub abs_gy: f64,
}

/// Differences of every applicable DVH point between two doses, per non-empty ROI.
pub fn compare_dvh_points<T: Scalar>(
    plan: &[T],
    reference: &[T],
    structures: &StructureSet,
    grid: &VoxelGrid,
) -> Result<Vec<DvhDifference>, EvalError> {
    if plan.len() != reference.len() {
        return Err(EvalError::LengthMismatch {
            expected: reference.len(),
            found: plan.len(),
        });
    }
    let mut out = Vec::new();
    for roi in structures.rois.iter().filter(|r| !r.voxels.is_empty()) {
        for &point in DvhPointKind::for_roi(&roi.kind) {
            let plan_gy = dvh_point(plan, &roi.voxels, grid, point)?.as_f64();
            let reference_gy = dvh_point(reference, &roi.voxels, grid, point)?.as_f64();
            let signed_gy = plan_gy - reference_gy;
            out.push(DvhDifference {
                roi: roi.name.clone(),
                point,
                plan_gy,
                reference_gy,
                signed_gy,
                abs_gy: signed_gy.abs(),
            });
        }
    }
    Ok(out)
}

/// Minimum, quartiles and maximum, with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumberSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumberSummary {
    /// `None` for an empty sample or one containing NaN.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}
