//! Patient bundles: geometry, structures, influence matrix and dose vectors.

mod bundle;
pub mod openkbp;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::sparse::{DoseInfluenceMatrix, MatrixError};

pub use bundle::{
    list_predictions, load_patient, load_prediction, read_dose_csv, write_bundle, write_dose_csv,
    write_prediction, BundleMeta, PREDICTIONS_DIR,
};
pub use validate::{validate_case, CaseSummary, Finding, RoiSummary, ValidationReport};

/// OAR names that may carry a structure-maximum penalty.
pub const MAX_DOSE_OARS: [&str; 3] = ["brainstem", "spinal_cord", "mandible"];
/// OAR names that may carry a structure-mean penalty.
pub const MEAN_DOSE_OARS: [&str; 4] = ["right_parotid", "left_parotid", "larynx", "esophagus"];
/// Standard prescription levels in Gy.
pub const PTV_LEVELS_GY: [f64; 3] = [56.0, 63.0, 70.0];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing required file {0}")]
    MissingFile(String),
    #[error("{file}:{line}: {message}")]
    MalformedRecord {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}:{line}: index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        file: String,
        line: u64,
        index: usize,
        limit: usize,
    },
    #[error("{file}:{line}: negative value {value}")]
    NegativeValue { file: String, line: u64, value: f64 },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Json { file: String, message: String },
    #[error("influence matrix: {0}")]
    Matrix(#[from] MatrixError),
    #[error("case failed validation: {}", summarize_findings(.0))]
    Invalid(Vec<Finding>),
}

fn summarize_findings(findings: &[Finding]) -> String {
    let shown: Vec<String> = findings.iter().take(3).map(ToString::to_string).collect();
    let more = findings.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} (+{more} more)", shown.join("; "))
    } else {
        shown.join("; ")
    }
}

/// Regular voxel lattice. Voxel ids are flat indices into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], voxel_size_mm: [f64; 3]) -> Option<Self> {
        let grid = Self { dims, voxel_size_mm };
        grid.is_valid().then_some(grid)
    }

    pub fn is_valid(&self) -> bool {
        self.dims.iter().all(|&d| d > 0)
            && self.voxel_size_mm.iter().all(|&s| s.is_finite() && s > 0.0)
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Voxel volume in cm³.
    pub fn voxel_volume_cc(&self) -> f64 {
        self.voxel_size_mm.iter().product::<f64>() / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoiKind {
    Ptv { level_gy: f64 },
    Oar,
    OarMax,
    OarMean,
}

impl RoiKind {
    pub fn is_target(&self) -> bool {
        matches!(self, RoiKind::Ptv { .. })
    }

    pub fn level_gy(&self) -> Option<f64> {
        match *self {
            RoiKind::Ptv { level_gy } => Some(level_gy),
            _ => None,
        }
    }

    /// Tag used in `structures.csv`.
    pub fn tag(&self) -> &'static str {
        match self {
            RoiKind::Ptv { .. } => "ptv",
            RoiKind::Oar => "oar",
            RoiKind::OarMax => "oar_max",
            RoiKind::OarMean => "oar_mean",
        }
    }
}

impl fmt::Display for RoiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoiKind::Ptv { level_gy } => write!(f, "ptv({level_gy} Gy)"),
            other => f.write_str(other.tag()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub name: String,
    pub kind: RoiKind,
    pub voxels: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureSet {
    pub rois: Vec<Roi>,
}

impl StructureSet {
    pub fn get(&self, name: &str) -> Option<&Roi> {
        self.rois.iter().find(|r| r.name == name)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Roi> {
        self.rois.iter().filter(|r| r.kind.is_target())
    }

    pub fn organs(&self) -> impl Iterator<Item = &Roi> {
        self.rois.iter().filter(|r| !r.kind.is_target())
    }

    /// Sorts ROIs by name and voxel ids ascending.
    pub fn canonicalize(&mut self) {
        self.rois.sort_by(|a, b| a.name.cmp(&b.name));
        for roi in &mut self.rois {
            roi.voxels.sort_unstable();
        }
    }
}

/// Per-voxel dose in Gy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DoseVector<T = f64>(pub Vec<T>);

impl<T: Scalar> DoseVector<T> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn cast<U: Scalar>(&self) -> DoseVector<U> {
        DoseVector(self.0.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

impl<T> Deref for DoseVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for DoseVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// How per-voxel importance weights are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelWeighting {
    #[default]
    Uniform,
    /// Weight equals the voxel volume in cm³.
    Volume,
}

impl FromStr for VoxelWeighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "volume" => Ok(Self::Volume),
            _ => Err(format!("unknown voxel weighting `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientCase<T = f64> {
    pub id: String,
    pub grid: VoxelGrid,
    pub structures: StructureSet,
    pub influence: DoseInfluenceMatrix<T>,
    pub predicted_dose: DoseVector<T>,
    pub reference_dose: Option<DoseVector<T>>,
    /// Sorted voxel ids where dose may be non-zero.
    pub feasible_mask: Option<Vec<usize>>,
    pub voxel_weights: Vec<T>,
}

impl<T: Scalar> PatientCase<T> {
    pub fn n_voxels(&self) -> usize {
        self.grid.n_voxels()
    }

    pub fn n_beamlets(&self) -> usize {
        self.influence.n_beamlets()
    }

    pub fn set_voxel_weighting(&mut self, weighting: VoxelWeighting) {
        let w = match weighting {
            VoxelWeighting::Uniform => T::one(),
            VoxelWeighting::Volume => T::of(self.grid.voxel_volume_cc()),
        };
        self.voxel_weights = vec![w; self.n_voxels()];
    }

    pub fn prescription(&self) -> DoseVector<T> {
        build_prescription(&self.structures, self.n_voxels())
    }

    pub fn cast<U: Scalar>(&self) -> PatientCase<U> {
        PatientCase {
            id: self.id.clone(),
            grid: self.grid,
            structures: self.structures.clone(),
            influence: self.influence.cast(),
            predicted_dose: self.predicted_dose.cast(),
            reference_dose: self.reference_dose.as_ref().map(DoseVector::cast),
            feasible_mask: self.feasible_mask.clone(),
            voxel_weights: self.voxel_weights.iter().map(|w| U::of(w.as_f64())).collect(),
        }
    }

    /// Sorted membership flags for the feasible mask, `None` when unrestricted.
    pub(crate) fn feasible_flags(&self) -> Option<Vec<bool>> {
        self.feasible_mask.as_ref().map(|mask| {
            let mut flags = vec![false; self.n_voxels()];
            for &v in mask {
                if v < flags.len() {
                    flags[v] = true;
                }
            }
            flags
        })
    }
}

/// Per-voxel prescription: the highest PTV level containing the voxel, 0 outside targets.
pub fn build_prescription<T: Scalar>(structures: &StructureSet, n_voxels: usize) -> DoseVector<T> {
    let mut pres = vec![0.0f64; n_voxels];
    for roi in &structures.rois {
        if let RoiKind::Ptv { level_gy } = roi.kind {
            for &v in &roi.voxels {
                if v < n_voxels && level_gy > pres[v] {
                    pres[v] = level_gy;
                }
            }
        }
    }
    DoseVector(pres.into_iter().map(T::of).collect())
}

/// Voxels covered by any target, ascending.
pub fn target_voxels(structures: &StructureSet) -> BTreeSet<usize> {
    structures
        .targets()
        .flat_map(|r| r.voxels.iter().copied())
        .collect()
}

/// Maps dataset-style names (`SpinalCord`, `PTV70`) to the canonical snake case used here.
pub fn canonical_roi_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 4);
    let chars: Vec<char> = raw.trim().chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' || c == '-' {
            out.push('_');
        } else if c.is_ascii_uppercase() {
            let prev_lower = i > 0 && chars[i - 1].is_ascii_lowercase();
            if prev_lower {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roi(name: &str, kind: RoiKind, voxels: &[usize]) -> Roi {
        Roi {
            name: name.into(),
            kind,
            voxels: voxels.to_vec(),
        }
    }

    #[test]
    fn grid_volume() {
        let g = VoxelGrid::new([2, 3, 4], [2.0, 2.5, 10.0]).unwrap();
        assert_eq!(g.n_voxels(), 24);
        assert!((g.voxel_volume_cc() - 0.05).abs() < 1e-15);
        assert!(VoxelGrid::new([0, 1, 1], [1.0; 3]).is_none());
        assert!(VoxelGrid::new([1, 1, 1], [1.0, -1.0, 1.0]).is_none());
    }

    #[test]
    fn prescription_uses_highest_level() {
        let s = StructureSet {
            rois: vec![
                roi("ptv56", RoiKind::Ptv { level_gy: 56.0 }, &[0, 1]),
                roi("ptv70", RoiKind::Ptv { level_gy: 70.0 }, &[1, 2]),
                roi("brainstem", RoiKind::OarMax, &[3]),
            ],
        };
        let p: DoseVector = build_prescription(&s, 5);
        assert_eq!(p.0, vec![56.0, 70.0, 70.0, 0.0, 0.0]);

        let mut reversed = s.clone();
        reversed.rois.reverse();
        assert_eq!(build_prescription::<f64>(&reversed, 5), p);
    }

    #[test]
    fn canonical_names() {
        assert_eq!(canonical_roi_name("SpinalCord"), "spinal_cord");
        assert_eq!(canonical_roi_name("RightParotid"), "right_parotid");
        assert_eq!(canonical_roi_name("PTV70"), "ptv70");
        assert_eq!(canonical_roi_name("Brainstem"), "brainstem");
        assert_eq!(canonical_roi_name("left_parotid"), "left_parotid");
    }
}
