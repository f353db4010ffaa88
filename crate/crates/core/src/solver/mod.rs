//! Minimization of the reduced objective over nonnegative intensities.

mod accelerated;
mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ObjectiveBreakdown, QuadLinModel};
use crate::patient_io::DoseVector;
use crate::scalar::Scalar;

pub use accelerated::solve_accelerated;
pub use reference::{reference_solve, REFERENCE_MAX_BEAMLETS, REFERENCE_MAX_VOXELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Accelerated projected gradient on the Huber-smoothed objective.
    #[default]
    AcceleratedProximal,
    /// Plain projected subgradient with `a/√k` steps; slow, for cross-checks only.
    ProjectedSubgradientReference,
}

/// Backtracking line search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepRule {
    /// Starting Lipschitz estimate; probed from the problem when absent.
    pub initial_lipschitz: Option<f64>,
    /// Factor applied to the estimate when sufficient decrease fails (> 1).
    pub increase: f64,
    /// Factor applied after each accepted step (in (0, 1]).
    pub relax: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial_lipschitz: None,
            increase: 2.0,
            relax: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub rel_obj_tol: f64,
    pub stall_window: usize,
    /// Huber half-width in Gy for the absolute-value and linear-hinge terms.
    /// Zero disables smoothing.
    pub smoothing_delta_gy: f64,
    pub step: StepRule,
    /// Seeds the direction used to probe the initial Lipschitz estimate.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::AcceleratedProximal,
            max_iters: 20_000,
            rel_obj_tol: 1e-6,
            stall_window: 50,
            smoothing_delta_gy: 0.01,
            step: StepRule::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidConfig(m.to_owned()));
        if !(self.rel_obj_tol.is_finite() && self.rel_obj_tol > 0.0) {
            return bad("rel_obj_tol must be positive");
        }
        if self.stall_window == 0 {
            return bad("stall_window must be positive");
        }
        if !(self.smoothing_delta_gy.is_finite() && self.smoothing_delta_gy >= 0.0) {
            return bad("smoothing_delta_gy must be nonnegative");
        }
        if !(self.step.increase > 1.0 && self.step.increase.is_finite()) {
            return bad("step.increase must exceed 1");
        }
        if !(self.step.relax > 0.0 && self.step.relax <= 1.0) {
            return bad("step.relax must lie in (0, 1]");
        }
        if let Some(l) = self.step.initial_lipschitz {
            if !(l.is_finite() && l > 0.0) {
                return bad("step.initial_lipschitz must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("objective became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("instance of {voxels} voxels x {beamlets} beamlets exceeds the reference solver limit")]
    InstanceTooLarge { voxels: usize, beamlets: usize },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted; the returned plan is the best iterate.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective the method descends (smoothed for the accelerated method).
    pub objective: f64,
    /// Only computed at checkpoints.
    pub optimality: Option<f64>,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Exact objective at the returned plan.
    pub final_objective: f64,
    pub smoothed_objective: f64,
    pub optimality_measure: f64,
    pub restarts: usize,
    pub wall_time_s: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct PlanSolution<T> {
    pub fluence: Vec<T>,
    pub dose: DoseVector<T>,
    pub breakdown: ObjectiveBreakdown<T>,
    pub diagnostics: Diagnostics,
}

impl<T> PlanSolution<T> {
    pub fn converged(&self) -> bool {
        self.diagnostics.status == SolveStatus::Converged
    }
}

/// Minimizes the objective of `model` with the configured method.
pub fn solve<T: Scalar>(
    model: &QuadLinModel<'_, T>,
    config: &SolverConfig,
) -> Result<PlanSolution<T>, SolveError> {
    config.validate()?;
    match config.method {
        Method::AcceleratedProximal => solve_accelerated(model, config),
        Method::ProjectedSubgradientReference => reference_solve(model, config.max_iters),
    }
}

/// Projected-gradient stationarity residual, scaled by `1 / (1 + |F|)`.
///
/// Uses the gradient of the objective smoothed with half-width `delta_gy`
/// (the exact subgradient when zero). Components at the bound only count
/// when they point into the feasible set.
pub fn optimality_measure<T: Scalar>(
    model: &QuadLinModel<'_, T>,
    fluence: &[T],
    delta_gy: f64,
) -> Result<T, ModelError> {
    let (parts, grad) = model.gradient(fluence, T::of(delta_gy))?;
    Ok(projected_residual(fluence, &grad, parts.total))
}

pub(crate) fn projected_residual<T: Scalar>(x: &[T], grad: &[T], objective: T) -> T {
    let mut worst = T::zero();
    for (&xi, &gi) in x.iter().zip(grad) {
        let gi = if xi > T::zero() { gi } else { gi.min(T::zero()) };
        worst = worst.max(gi.abs());
    }
    worst / (T::one() + objective.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c = SolverConfig::default();
        assert_eq!(c.rel_obj_tol, 1e-6);
        assert_eq!(c.stall_window, 50);
        assert_eq!(c.smoothing_delta_gy, 0.01);
        c.validate().unwrap();
        let bad = SolverConfig {
            rel_obj_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let parsed: SolverConfig =
            serde_json::from_str(r#"{"method":"projected_subgradient_reference","max_iters":5}"#).unwrap();
        assert_eq!(parsed.method, Method::ProjectedSubgradientReference);
        assert_eq!(parsed.stall_window, 50);
    }

    #[test]
    fn residual_ignores_outward_bound_components() {
        let r = projected_residual(&[0.0, 1.0], &[5.0, -0.5], 0.0);
        assert_eq!(r, 0.5);
        let r = projected_residual(&[0.0, 1.0], &[-3.0, 0.0], 1.0);
        assert_eq!(r, 1.5);
    }
}
