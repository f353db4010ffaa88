use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::patient_io::{RoiKind, StructureSet, VoxelGrid};
use crate::scalar::{cmp_finite, Scalar};

/// Volume in cm³ behind the near-maximum point.
pub const NEAR_MAX_VOLUME_CC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DvhPointKind {
    #[serde(rename = "D_mean")]
    DMean,
    /// Minimum dose within the hottest 0.1 cm³.
    #[serde(rename = "D_0.1cc")]
    D0_1cc,
    /// Dose received by the hottest 1% of voxels.
    #[serde(rename = "D_1")]
    D1,
    #[serde(rename = "D_95")]
    D95,
    #[serde(rename = "D_99")]
    D99,
}

impl DvhPointKind {
    pub const ALL: [DvhPointKind; 5] = [Self::DMean, Self::D0_1cc, Self::D1, Self::D95, Self::D99];
    pub const ORGAN: [DvhPointKind; 2] = [Self::DMean, Self::D0_1cc];
    pub const TARGET: [DvhPointKind; 3] = [Self::D1, Self::D95, Self::D99];

    pub fn label(&self) -> &'static str {
        match self {
            Self::DMean => "D_mean",
            Self::D0_1cc => "D_0.1cc",
            Self::D1 => "D_1",
            Self::D95 => "D_95",
            Self::D99 => "D_99",
        }
    }

    /// Points reported for an ROI of this kind.
    pub fn for_roi(kind: &RoiKind) -> &'static [DvhPointKind] {
        if kind.is_target() {
            &Self::TARGET
        } else {
            &Self::ORGAN
        }
    }

    fn percent(&self) -> Option<usize> {
        match self {
            Self::D1 => Some(1),
            Self::D95 => Some(95),
            Self::D99 => Some(99),
            _ => None,
        }
    }
}

impl fmt::Display for DvhPointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DvhPointKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown DVH point `{s}`"))
    }
}

/// A DVH point value. `volume_limited` marks a near-maximum point on a
/// structure smaller than 0.1 cm³, reported as the maximum dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DvhPoint<T = f64> {
    pub kind: DvhPointKind,
    pub gy: T,
    pub volume_limited: bool,
}

/// 1-based rank in the descending sort for the `p`% dose (nearest rank).
pub fn percentile_rank(p: usize, n: usize) -> usize {
    (p * n).div_ceil(100).max(1)
}

/// Number of hottest voxels making up 0.1 cm³.
pub fn near_max_voxel_count(voxel_volume_cc: f64) -> usize {
    // The small offset keeps exact quotients such as 0.1 / 0.05 from rounding up.
    let k = (NEAR_MAX_VOLUME_CC / voxel_volume_cc - 1e-9).ceil();
    if k.is_finite() && k >= 1.0 {
        k as usize
    } else {
        1
    }
}

fn gather<T: Scalar>(dose: &[T], voxel_ids: &[usize]) -> Result<Vec<T>, EvalError> {
    if voxel_ids.is_empty() {
        return Err(EvalError::EmptyStructure);
    }
    voxel_ids
        .iter()
        .map(|&v| {
            dose.get(v).copied().ok_or(EvalError::VoxelOutOfRange {
                voxel: v,
                n_voxels: dose.len(),
            })
        })
        .collect()
}

/// Uniform mean, summed in voxel-list order.
fn uniform_mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::of(values.len() as f64)
}

/// A DVH point over `voxel_ids`, with the volume-limited flag.
pub fn dvh_point_detail<T: Scalar>(
    dose: &[T],
    voxel_ids: &[usize],
    grid: &VoxelGrid,
    kind: DvhPointKind,
) -> Result<DvhPoint<T>, EvalError> {
    let mut values = gather(dose, voxel_ids)?;
    let n = values.len();
    if kind == DvhPointKind::DMean {
        return Ok(DvhPoint {
            kind,
            gy: uniform_mean(&values),
            volume_limited: false,
        });
    }
    values.sort_unstable_by(|a, b| cmp_finite(b, a));
    let (rank, volume_limited) = match kind.percent() {
        Some(p) => (percentile_rank(p, n), false),
        None => {
            let k = near_max_voxel_count(grid.voxel_volume_cc());
            if k > n {
                (1, true)
            } else {
                (k, false)
            }
        }
    };
    Ok(DvhPoint {
        kind,
        gy: values[rank - 1],
        volume_limited,
    })
}

/// DVH point in Gy. Percentiles use nearest rank on the descending sort,
/// `D_0.1cc` is the coolest of the hottest `⌈0.1 cc / voxel volume⌉` voxels
/// (the maximum when the structure is smaller), and `D_mean` is uniform.
pub fn dvh_point<T: Scalar>(
    dose: &[T],
    voxel_ids: &[usize],
    grid: &VoxelGrid,
    kind: DvhPointKind,
) -> Result<T, EvalError> {
    dvh_point_detail(dose, voxel_ids, grid, kind).map(|p| p.gy)
}

/// Weighted mean dose over `voxel_ids`; `weights` is indexed by voxel id.
pub fn weighted_mean_dose<T: Scalar>(
    dose: &[T],
    voxel_ids: &[usize],
    weights: &[T],
) -> Result<T, EvalError> {
    let values = gather(dose, voxel_ids)?;
    let w = gather(weights, voxel_ids)?;
    let total = w.iter().copied().sum::<T>();
    let acc = values.iter().zip(&w).map(|(&d, &w)| d * w).sum::<T>();
    Ok(acc / total)
}

/// Cumulative DVH sampled at `0, bin, 2·bin, …` up to the first edge above the maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvhCurve {
    pub dose_gy: Vec<f64>,
    /// Fraction of the structure receiving at least `dose_gy[i]`.
    pub volume_fraction: Vec<f64>,
}

pub fn dvh_curve<T: Scalar>(dose: &[T], voxel_ids: &[usize], bin_gy: f64) -> Result<DvhCurve, EvalError> {
    if !(bin_gy.is_finite() && bin_gy > 0.0) {
        return Err(EvalError::InvalidBin(bin_gy));
    }
    let mut values: Vec<f64> = gather(dose, voxel_ids)?.into_iter().map(Scalar::as_f64).collect();
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    let max = values[n - 1].max(0.0);
    let bins = (max / bin_gy).floor() as usize + 1;
    let mut dose_gy = Vec::with_capacity(bins + 1);
    let mut volume_fraction = Vec::with_capacity(bins + 1);
    let mut below = 0;
    for i in 0..=bins {
        let edge = i as f64 * bin_gy;
        while below < n && values[below] < edge {
            below += 1;
        }
        dose_gy.push(edge);
        volume_fraction.push((n - below) as f64 / n as f64);
    }
    Ok(DvhCurve {
        dose_gy,
        volume_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiDvh {
    pub roi: String,
    pub kind: RoiKind,
    pub n_voxels: usize,
    pub points: Vec<DvhPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<DvhCurve>,
}

impl RoiDvh {
    pub fn point(&self, kind: DvhPointKind) -> Option<&DvhPoint> {
        self.points.iter().find(|p| p.kind == kind)
    }
}

/// Applicable DVH points (and optionally curves) for every non-empty ROI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvhReport {
    pub rois: Vec<RoiDvh>,
}

impl DvhReport {
    pub fn get(&self, roi: &str) -> Option<&RoiDvh> {
        self.rois.iter().find(|r| r.roi == roi)
    }
}

pub fn dvh_report<T: Scalar>(
    dose: &[T],
    structures: &StructureSet,
    grid: &VoxelGrid,
    curve_bin_gy: Option<f64>,
) -> Result<DvhReport, EvalError> {
    let mut rois = Vec::new();
    for roi in &structures.rois {
        if roi.voxels.is_empty() {
            continue;
        }
        let points = DvhPointKind::for_roi(&roi.kind)
            .iter()
            .map(|&k| {
                dvh_point_detail(dose, &roi.voxels, grid, k).map(|p| DvhPoint {
                    kind: p.kind,
                    gy: p.gy.as_f64(),
                    volume_limited: p.volume_limited,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let curve = curve_bin_gy
            .map(|bin| dvh_curve(dose, &roi.voxels, bin))
            .transpose()?;
        rois.push(RoiDvh {
            roi: roi.name.clone(),
            kind: roi.kind,
            n_voxels: roi.voxels.len(),
            points,
            curve,
        });
    }
    Ok(DvhReport { rois })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(volume_cc: f64) -> VoxelGrid {
        VoxelGrid::new([100, 10, 10], [volume_cc * 1000.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn near_max_uses_two_hottest() {
        let d = [60.0, 55.0, 40.0];
        let p = dvh_point_detail(&d, &[0, 1, 2], &grid(0.05), DvhPointKind::D0_1cc).unwrap();
        assert_eq!((p.gy, p.volume_limited), (55.0, false));
    }

    #[test]
    fn near_max_falls_back_on_small_structures() {
        let d = [60.0, 55.0];
        let p = dvh_point_detail(&d, &[0, 1], &grid(0.01), DvhPointKind::D0_1cc).unwrap();
        assert_eq!((p.gy, p.volume_limited), (60.0, true));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let d: Vec<f64> = (1..=20).map(f64::from).collect();
        let ids: Vec<usize> = (0..20).collect();
        let g = grid(0.008);
        assert_eq!(dvh_point(&d, &ids, &g, DvhPointKind::D95).unwrap(), 2.0);
        assert_eq!(dvh_point(&d, &ids, &g, DvhPointKind::D99).unwrap(), 1.0);
        assert_eq!(dvh_point(&d, &ids, &g, DvhPointKind::D1).unwrap(), 20.0);
        assert_eq!(dvh_point(&d, &ids, &g, DvhPointKind::DMean).unwrap(), 10.5);
        assert_eq!(percentile_rank(1, 250), 3);
    }

    #[test]
    fn errors() {
        let g = grid(0.008);
        assert_eq!(dvh_point::<f64>(&[1.0], &[], &g, DvhPointKind::DMean), Err(EvalError::EmptyStructure));
        assert!(matches!(
            dvh_point(&[1.0], &[3], &g, DvhPointKind::D1),
            Err(EvalError::VoxelOutOfRange { voxel: 3, .. })
        ));
    }

    #[test]
    fn curve_spans_one_to_zero() {
        let c = dvh_curve(&[0.0, 1.0, 2.5], &[0, 1, 2], 1.0).unwrap();
        assert_eq!(c.dose_gy, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(c.volume_fraction, vec![1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn weighted_mean() {
        let m = weighted_mean_dose(&[10.0, 20.0, 30.0], &[0, 1, 2], &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m, 22.5);
    }

    #[test]
    fn kind_labels_round_trip() {
        for k in DvhPointKind::ALL {
            assert_eq!(k.label().parse::<DvhPointKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.label()));
        }
    }
}
