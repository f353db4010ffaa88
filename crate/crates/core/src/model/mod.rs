//! The reduced objective over beamlet intensities.
//!
//! The program being minimized has four parts:
//!
//! * `z1` target voxels: squared under/overdose outside the band between
//!   prediction and prescription, plus a linear pull toward the prescription;
//! * `z2` organ voxels: squared overdose above the prediction, plus a linear
//!   pull toward zero dose;
//! * `z3` voxels of max-dose organs: linear overdose above the structure's
//!   maximum predicted dose minus a credit for staying under `ζ·MaxP`;
//! * `z4` mean-dose organs: squared excess of the structure mean over its
//!   predicted mean, plus the squared mean itself.
//!
//! `z1`..`z3` are normalized by the total voxel weight of their set, `z4` is not.
//! Auxiliary variables are eliminated in closed form (see [`penalty`]), so the
//! only decision variables left are the nonnegative intensities.

mod coefficients;
pub mod penalty;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::patient_io::{build_prescription, target_voxels, DoseVector, PatientCase, RoiKind};
use crate::scalar::Scalar;
use crate::sparse::{DoseInfluenceMatrix, MatrixError};

pub use coefficients::Coefficients;
pub use penalty::{
    voxel_penalty, MaxVoxelParams, OarVoxelParams, PenaltyWeights, PtvVoxelParams,
    VoxelPenaltyParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("vector length {found} does not match expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A mean-dose organ: its voxels, their weights and the predicted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanStructureParams<T> {
    pub name: String,
    pub voxels: Vec<usize>,
    pub weights: Vec<T>,
    pub weight_sum: T,
    pub mean_pred: T,
}

impl<T: Scalar> MeanStructureParams<T> {
    /// Weighted mean dose of the structure.
    pub fn mean(&self, dose: &[T]) -> T {
        let mut acc = T::zero();
        for (&v, &w) in self.voxels.iter().zip(&self.weights) {
            acc = acc + w * dose[v];
        }
        acc / self.weight_sum
    }

    /// Structure term and its derivative with respect to the mean.
    pub fn penalty(&self, w: &PenaltyWeights<T>, mean: T) -> (T, T) {
        let (over, dover) = penalty::squared_hinge(mean - self.mean_pred);
        (
            w.psi[4] * over + w.xi[3] * mean * mean,
            w.psi[4] * dover + T::of(2.0) * w.xi[3] * mean,
        )
    }
}

/// A max-dose organ and its maximum predicted dose.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxStructureSummary {
    pub name: String,
    pub voxels: usize,
    pub max_pred_gy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStructureSummary {
    pub name: String,
    pub voxels: usize,
    pub mean_pred_gy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub ptv_voxels: usize,
    pub oar_voxels: usize,
    pub max_memberships: usize,
    pub max_structures: Vec<MaxStructureSummary>,
    pub mean_structures: Vec<MeanStructureSummary>,
    pub coefficients: Coefficients,
    pub warnings: Vec<String>,
}

/// Objective value split into its four parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ObjectiveBreakdown<T> {
    pub z1: T,
    pub z2: T,
    pub z3: T,
    pub z4: T,
    pub total: T,
}

impl<T: Scalar> ObjectiveBreakdown<T> {
    fn from_parts(z1: T, z2: T, z3: T, z4: T) -> Self {
        Self {
            z1,
            z2,
            z3,
            z4,
            total: z1 + z2 + z3 + z4,
        }
    }

    pub fn to_f64(&self) -> ObjectiveBreakdown<f64> {
        ObjectiveBreakdown {
            z1: self.z1.as_f64(),
            z2: self.z2.as_f64(),
            z3: self.z3.as_f64(),
            z4: self.z4.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

/// Assembled objective for one patient and one prediction.
#[derive(Debug, Clone)]
pub struct QuadLinModel<'a, T> {
    influence: &'a DoseInfluenceMatrix<T>,
    pub ptv: Vec<PtvVoxelParams<T>>,
    pub oar: Vec<OarVoxelParams<T>>,
    pub max_terms: Vec<MaxVoxelParams<T>>,
    pub max_structures: Vec<MaxStructureSummary>,
    pub mean_structures: Vec<MeanStructureParams<T>>,
    pub coefficients: Coefficients,
    weights: PenaltyWeights<T>,
    pub warnings: Vec<String>,
}

/// Builds the per-voxel penalty parameters from a case, a prediction and coefficients.
///
/// A voxel inside any target is treated as target only. Voxels outside the
/// feasible mask (when present) carry no penalty. Max/mean-dose organs left
/// without voxels are dropped with a warning.
pub fn assemble_model<'a, T: Scalar>(
    case: &'a PatientCase<T>,
    prediction: &[T],
    coeffs: &Coefficients,
) -> Result<QuadLinModel<'a, T>, ModelError> {
    coeffs.validate()?;
    let n = case.n_voxels();
    check_len(n, prediction.len())?;
    check_len(n, case.voxel_weights.len())?;
    check_len(n, case.influence.n_voxels())?;

    let pres: DoseVector<T> = build_prescription(&case.structures, n);
    let feasible = case.feasible_flags();
    let allowed = |v: usize| feasible.as_ref().is_none_or(|f| f[v]);
    let omega = &case.voxel_weights;
    let targets = target_voxels(&case.structures);

    let ptv_ids: Vec<usize> = targets.iter().copied().filter(|&v| v < n && allowed(v)).collect();
    let ptv_total = sum_weights(omega, &ptv_ids);
    let ptv = ptv_ids
        .iter()
        .map(|&v| PtvVoxelParams {
            voxel: v,
            weight: omega[v] / ptv_total,
            lower: prediction[v].min(pres[v]),
            upper: prediction[v].max(pres[v]),
            pres: pres[v],
        })
        .collect();

    let organ_voxels = |voxels: &[usize]| -> Vec<usize> {
        let set: BTreeSet<usize> = voxels
            .iter()
            .copied()
            .filter(|&v| v < n && !targets.contains(&v) && allowed(v))
            .collect();
        set.into_iter().collect()
    };

    let oar_ids = organ_voxels(
        &case
            .structures
            .organs()
            .flat_map(|r| r.voxels.iter().copied())
            .collect::<Vec<_>>(),
    );
    let oar_total = sum_weights(omega, &oar_ids);
    let oar = oar_ids
        .iter()
        .map(|&v| OarVoxelParams {
            voxel: v,
            weight: omega[v] / oar_total,
            pred: prediction[v],
        })
        .collect();

    let mut warnings = Vec::new();
    let mut max_members: Vec<(usize, T, T, T)> = Vec::new();
    let mut max_structures = Vec::new();
    let mut mean_structures = Vec::new();
    for roi in case.structures.organs() {
        let voxels = organ_voxels(&roi.voxels);
        match roi.kind {
            RoiKind::OarMax | RoiKind::OarMean if voxels.is_empty() => {
                let msg = format!("{}: structure `{}` has no penalized voxels; dropped", case.id, roi.name);
                log::warn!("{msg}");
                warnings.push(msg);
            }
            RoiKind::OarMax => {
                let max_pred = voxels
                    .iter()
                    .map(|&v| prediction[v])
                    .fold(T::zero(), T::max);
                let (z, c) = (coeffs.zeta_for(&roi.name), coeffs.chi_for(&roi.name));
                if z + c > 1.0 + 1e-12 || coeffs.psi4 < coeffs.xi3 {
                    let msg = format!(
                        "{}: max-dose term of `{}` is not convex (zeta + chi = {}, psi4 = {}, xi3 = {}); \
                         the solver may stop at a non-global stationary point",
                        case.id,
                        roi.name,
                        z + c,
                        coeffs.psi4,
                        coeffs.xi3
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                let zeta = T::of(z);
                let chi = T::of(c);
                max_members.extend(voxels.iter().map(|&v| (v, max_pred, zeta, chi)));
                max_structures.push(MaxStructureSummary {
                    name: roi.name.clone(),
                    voxels: voxels.len(),
                    max_pred_gy: max_pred.as_f64(),
                });
            }
            RoiKind::OarMean => {
                let weights: Vec<T> = voxels.iter().map(|&v| omega[v]).collect();
                let weight_sum = weights.iter().copied().sum::<T>();
                let mut acc = T::zero();
                for (&v, &w) in voxels.iter().zip(&weights) {
                    acc = acc + w * prediction[v];
                }
                mean_structures.push(MeanStructureParams {
                    name: roi.name.clone(),
                    voxels,
                    weights,
                    weight_sum,
                    mean_pred: acc / weight_sum,
                });
            }
            _ => {}
        }
    }
    let max_total = max_members.iter().map(|m| omega[m.0]).sum::<T>();
    let max_terms = max_members
        .into_iter()
        .map(|(v, max_pred, zeta, chi)| MaxVoxelParams {
            voxel: v,
            weight: omega[v] / max_total,
            max_pred,
            zeta,
            chi,
        })
        .collect();

    Ok(QuadLinModel {
        influence: &case.influence,
        ptv,
        oar,
        max_terms,
        max_structures,
        mean_structures,
        coefficients: coeffs.clone(),
        weights: PenaltyWeights::new(coeffs),
        warnings,
    })
}

fn sum_weights<T: Scalar>(omega: &[T], ids: &[usize]) -> T {
    ids.iter().map(|&v| omega[v]).sum()
}

fn check_len(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::LengthMismatch { expected, found })
    }
}

/// `d = A x`.
pub fn compute_dose<T: Scalar>(
    influence: &DoseInfluenceMatrix<T>,
    fluence: &[T],
) -> Result<DoseVector<T>, ModelError> {
    Ok(DoseVector(influence.dose(fluence)?))
}

impl<'a, T: Scalar> QuadLinModel<'a, T> {
    pub fn influence(&self) -> &'a DoseInfluenceMatrix<T> {
        self.influence
    }

    pub fn n_beamlets(&self) -> usize {
        self.influence.n_beamlets()
    }

    pub fn n_voxels(&self) -> usize {
        self.influence.n_voxels()
    }

    pub fn penalty_weights(&self) -> &PenaltyWeights<T> {
        &self.weights
    }

    pub fn compute_dose(&self, fluence: &[T]) -> Result<DoseVector<T>, ModelError> {
        compute_dose(self.influence, fluence)
    }

    /// Exact objective at intensities `fluence`.
    pub fn objective(&self, fluence: &[T]) -> Result<ObjectiveBreakdown<T>, ModelError> {
        let dose = self.influence.dose(fluence)?;
        Ok(self.evaluate_dose(&dose, T::zero(), None))
    }

    /// Subgradient of the exact objective (zero chosen at every kink).
    pub fn subgradient(&self, fluence: &[T]) -> Result<Vec<T>, ModelError> {
        self.gradient(fluence, T::zero()).map(|(_, g)| g)
    }

    /// Value and gradient of the objective smoothed with half-width `delta` Gy.
    pub fn gradient(
        &self,
        fluence: &[T],
        delta: T,
    ) -> Result<(ObjectiveBreakdown<T>, Vec<T>), ModelError> {
        let dose = self.influence.dose(fluence)?;
        let mut dose_grad = vec![T::zero(); self.n_voxels()];
        let parts = self.evaluate_dose(&dose, delta, Some(&mut dose_grad));
        Ok((parts, self.influence.adjoint(&dose_grad)?))
    }

    /// Evaluates the objective on a dose vector. When `dose_grad` is given it
    /// must be zeroed and `n_voxels` long; it receives `∂F/∂d`.
    pub fn evaluate_dose(
        &self,
        dose: &[T],
        delta: T,
        mut dose_grad: Option<&mut [T]>,
    ) -> ObjectiveBreakdown<T> {
        let w = &self.weights;
        let mut z1 = T::zero();
        for p in &self.ptv {
            let (value, slope) = p.penalty(w, dose[p.voxel], delta);
            z1 = z1 + value;
            if let Some(g) = dose_grad.as_deref_mut() {
                g[p.voxel] = g[p.voxel] + slope;
            }
        }
        let mut z2 = T::zero();
        for p in &self.oar {
            let (value, slope) = p.penalty(w, dose[p.voxel]);
            z2 = z2 + value;
            if let Some(g) = dose_grad.as_deref_mut() {
                g[p.voxel] = g[p.voxel] + slope;
            }
        }
        let mut z3 = T::zero();
        for p in &self.max_terms {
            let (value, slope) = p.penalty(w, dose[p.voxel], delta);
            z3 = z3 + value;
            if let Some(g) = dose_grad.as_deref_mut() {
                g[p.voxel] = g[p.voxel] + slope;
            }
        }
        let mut z4 = T::zero();
        for s in &self.mean_structures {
            let mean = s.mean(dose);
            let (value, slope) = s.penalty(w, mean);
            z4 = z4 + value;
            if let Some(g) = dose_grad.as_deref_mut() {
                let scale = slope / s.weight_sum;
                for (&v, &wv) in s.voxels.iter().zip(&s.weights) {
                    g[v] = g[v] + scale * wv;
                }
            }
        }
        ObjectiveBreakdown::from_parts(z1, z2, z3, z4)
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            ptv_voxels: self.ptv.len(),
            oar_voxels: self.oar.len(),
            max_memberships: self.max_terms.len(),
            max_structures: self.max_structures.clone(),
            mean_structures: self
                .mean_structures
                .iter()
                .map(|s| MeanStructureSummary {
                    name: s.name.clone(),
                    voxels: s.voxels.len(),
                    mean_pred_gy: s.mean_pred.as_f64(),
                })
                .collect(),
            coefficients: self.coefficients.clone(),
            warnings: self.warnings.clone(),
        }
    }
}
