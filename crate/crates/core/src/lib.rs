//! Prediction-guided fluence-map optimization for IMRT.
//!
//! A predicted dose distribution and the prescription are turned into a
//! convex objective over nonnegative beamlet intensities ([`model`]), which
//! [`solver`] minimizes. [`evaluation`] scores the resulting dose with DVH
//! points and clinical criteria. [`patient_io`] loads and writes patient
//! bundles.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `*F32` variants for single precision.

pub mod evaluation;
pub mod model;
pub mod patient_io;
mod scalar;
pub mod solver;
pub mod sparse;
pub mod synthetic;

pub use scalar::Scalar;

pub use evaluation::{
    aggregate_satisfaction, compare_dvh_points, criteria_report, dvh_curve, dvh_point, DvhPointKind,
    PtvCriterionMode,
};
pub use model::{assemble_model, compute_dose, Coefficients, ModelError, ObjectiveBreakdown};
pub use patient_io::{build_prescription, load_patient, validate_case, LoadError, StructureSet, VoxelGrid};
pub use solver::{optimality_measure, reference_solve, solve, SolveError, SolveStatus, SolverConfig};

pub type PatientCase = patient_io::PatientCase<f64>;
pub type DoseVector = patient_io::DoseVector<f64>;
pub type DoseInfluenceMatrix = sparse::DoseInfluenceMatrix<f64>;
pub type QuadLinModel<'a> = model::QuadLinModel<'a, f64>;
pub type PlanSolution = solver::PlanSolution<f64>;

pub type PatientCaseF32 = patient_io::PatientCase<f32>;
pub type DoseVectorF32 = patient_io::DoseVector<f32>;
pub type DoseInfluenceMatrixF32 = sparse::DoseInfluenceMatrix<f32>;
pub type QuadLinModelF32<'a> = model::QuadLinModel<'a, f32>;
pub type PlanSolutionF32 = solver::PlanSolution<f32>;
