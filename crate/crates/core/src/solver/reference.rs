//! Slow projected subgradient method used as a test oracle.

use std::time::Instant;

use super::{Diagnostics, Method, PlanSolution, SolveError, SolveStatus, TraceRow};
use crate::model::QuadLinModel;
use crate::patient_io::DoseVector;
use crate::scalar::Scalar;

pub const REFERENCE_MAX_VOXELS: usize = 1000;
pub const REFERENCE_MAX_BEAMLETS: usize = 100;

/// Distance the iterates may travel over the whole run, in units of the
/// intensity scale.
const PATH_LENGTH: f64 = 20.0;

/// Trace rows kept at most every this many iterations.
const TRACE_STRIDE: usize = 100;

/// Projected subgradient descent on the exact objective with normalized
/// steps `a/√k`, returning the best iterate seen.
///
/// `a` comes from the intensity scale (largest target or predicted dose over
/// the largest row sum of the influence matrix, times `√n_beamlets`) and the
/// iteration budget, so that the run can cover a fixed multiple of that scale.
pub fn reference_solve<T: Scalar>(
    model: &QuadLinModel<'_, T>,
    iters: usize,
) -> Result<PlanSolution<T>, SolveError> {
    let (nv, nb) = (model.n_voxels(), model.n_beamlets());
    if nv > REFERENCE_MAX_VOXELS || nb > REFERENCE_MAX_BEAMLETS {
        return Err(SolveError::InstanceTooLarge {
            voxels: nv,
            beamlets: nb,
        });
    }
    let started = Instant::now();
    let a = step_scale(model, iters);

    let mut x = vec![T::zero(); nb];
    let mut best = x.clone();
    let mut best_f = T::infinity();
    let mut trace = Vec::new();
    let mut status = SolveStatus::NotConverged;
    let mut done = 0;

    for k in 1..=iters.max(1) {
        let (parts, g) = model.gradient(&x, T::zero())?;
        let f = parts.total;
        if !f.is_finite() {
            return Err(SolveError::Diverged { iteration: k });
        }
        if f < best_f {
            best_f = f;
            best.copy_from_slice(&x);
        }
        // Direction projected onto the tangent cone of the orthant.
        let pg: Vec<T> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| if xi > T::zero() { gi } else { gi.min(T::zero()) })
            .collect();
        let norm = pg.iter().map(|&p| p * p).sum::<T>().sqrt();
        let step = a / T::of(k as f64).sqrt();
        if k % TRACE_STRIDE == 1 || norm == T::zero() {
            trace.push(TraceRow {
                iteration: k - 1,
                objective: f.as_f64(),
                optimality: Some((norm / (T::one() + f.abs())).as_f64()),
                step: step.as_f64(),
            });
        }
        done = k;
        if norm == T::zero() {
            status = SolveStatus::Converged;
            break;
        }
        if k == iters {
            break;
        }
        for (xi, &p) in x.iter_mut().zip(&pg) {
            *xi = (*xi - step * p / norm).pos();
        }
    }

    let dose = model.compute_dose(&best)?;
    let breakdown = model.evaluate_dose(&dose, T::zero(), None);
    let (_, g) = model.gradient(&best, T::zero())?;
    let opt = super::projected_residual(&best, &g, breakdown.total);
    Ok(PlanSolution {
        fluence: best,
        dose: DoseVector(dose.0),
        breakdown,
        diagnostics: Diagnostics {
            method: Method::ProjectedSubgradientReference,
            status,
            iterations: done,
            final_objective: breakdown.total.as_f64(),
            smoothed_objective: breakdown.total.as_f64(),
            optimality_measure: opt.as_f64(),
            restarts: 0,
            wall_time_s: started.elapsed().as_secs_f64(),
            trace,
        },
    })
}

fn step_scale<T: Scalar>(model: &QuadLinModel<'_, T>, iters: usize) -> T {
    let a = model.influence();
    let mut peak = T::one();
    for p in &model.ptv {
        peak = peak.max(p.upper);
    }
    for p in &model.oar {
        peak = peak.max(p.pred);
    }
    let row_max = (0..a.n_voxels())
        .map(|v| a.row(v).map(|(_, val)| val).sum::<T>())
        .fold(T::zero(), T::max);
    if row_max <= T::zero() {
        return T::one();
    }
    let x_scale = peak / row_max * T::of(a.n_beamlets() as f64).sqrt();
    // Total path length Σ a/√k ≈ 2a√iters is held at PATH_LENGTH times the scale.
    x_scale * T::of(PATH_LENGTH / 2.0 / (iters.max(1) as f64).sqrt())
}
