//! Accelerated projected gradient (FISTA-type) with backtracking and
//! function-value restarts, so accepted iterates never increase the objective.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{projected_residual, Diagnostics, Method, PlanSolution, SolveError, SolveStatus, SolverConfig, TraceRow};
use crate::model::QuadLinModel;
use crate::patient_io::DoseVector;
use crate::scalar::Scalar;

/// Iterations between stationarity checks once the objective has stalled.
const CHECK_EVERY: usize = 10;

struct Evaluator<'m, 'a, T> {
    model: &'m QuadLinModel<'a, T>,
    delta: T,
    scratch: Vec<T>,
}

impl<T: Scalar> Evaluator<'_, '_, T> {
    fn value(&self, dose: &[T]) -> T {
        self.model.evaluate_dose(dose, self.delta, None).total
    }

    fn value_and_grad(&mut self, dose: &[T], grad: &mut [T]) -> Result<T, SolveError> {
        self.scratch.iter_mut().for_each(|g| *g = T::zero());
        let f = self
            .model
            .evaluate_dose(dose, self.delta, Some(&mut self.scratch))
            .total;
        self.model
            .influence()
            .adjoint_into(&self.scratch, grad)
            .map_err(|e| SolveError::Model(e.into()))?;
        Ok(f)
    }
}

pub fn solve_accelerated<T: Scalar>(
    model: &QuadLinModel<'_, T>,
    config: &SolverConfig,
) -> Result<PlanSolution<T>, SolveError> {
    config.validate()?;
    let started = Instant::now();
    let a = model.influence();
    let (nb, nv) = (a.n_beamlets(), a.n_voxels());
    let mut ev = Evaluator {
        model,
        delta: T::of(config.smoothing_delta_gy),
        scratch: vec![T::zero(); nv],
    };
    let tol = T::of(config.rel_obj_tol);
    // Round-off allowance in the sufficient-decrease test.
    let slack = T::of(16.0) * T::epsilon();
    let increase = T::of(config.step.increase);
    let relax = T::of(config.step.relax);
    let dose_of = |x: &[T], out: &mut [T]| {
        a.dose_into(x, out)
            .map_err(|e| SolveError::Model(e.into()))
    };

    let mut x = vec![T::zero(); nb];
    let mut dx = vec![T::zero(); nv];
    let mut gx = vec![T::zero(); nb];
    let mut fx = ev.value_and_grad(&dx, &mut gx)?;
    if !fx.is_finite() {
        return Err(SolveError::Diverged { iteration: 0 });
    }
    let mut gx_current = true;

    let mut lip = match config.step.initial_lipschitz {
        Some(l) => T::of(l),
        None => probe_lipschitz(&mut ev, &gx, config.seed)?,
    };

    let mut y = x.clone();
    let mut dy = dx.clone();
    let mut fy = fx;
    let mut gy = gx.clone();
    let mut z = vec![T::zero(); nb];
    let mut dz = vec![T::zero(); nv];
    let mut x_prev = vec![T::zero(); nb];
    let mut dx_prev = vec![T::zero(); nv];
    let mut t = T::one();

    let initial_opt = projected_residual(&x, &gx, fx);
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: fx.as_f64(),
        optimality: Some(initial_opt.as_f64()),
        step: (T::one() / lip).as_f64(),
    }];
    let mut history = vec![fx];
    let mut restarts = 0;
    let mut status = SolveStatus::NotConverged;
    let mut last_opt = initial_opt;
    let mut just_restarted = true;
    let mut next_check = 0usize;
    let mut iterations = 0;

    if initial_opt == T::zero() {
        status = SolveStatus::Converged;
    }

    while status != SolveStatus::Converged && iterations < config.max_iters {
        iterations += 1;

        // Backtracking from y.
        let fz = loop {
            let step = T::one() / lip;
            let mut lin = T::zero();
            let mut sq = T::zero();
            for i in 0..nb {
                let zi = (y[i] - step * gy[i]).pos();
                let diff = zi - y[i];
                z[i] = zi;
                lin = lin + gy[i] * diff;
                sq = sq + diff * diff;
            }
            dose_of(&z, &mut dz)?;
            let fz = ev.value(&dz);
            if !fz.is_finite() && fy.is_finite() && sq > T::zero() {
                // Overshot into overflow; shrink the step.
                lip = lip * increase;
                continue;
            }
            if !fz.is_finite() {
                return Err(SolveError::Diverged { iteration: iterations });
            }
            let bound = fy + lin + lip / T::of(2.0) * sq;
            if sq == T::zero() || fz <= bound + slack * (T::one() + fy.abs()) {
                break fz;
            }
            lip = lip * increase;
            if !lip.is_finite() {
                return Err(SolveError::Diverged { iteration: iterations });
            }
        };

        let stuck = just_restarted && z == x;
        if fz > fx || stuck {
            if just_restarted {
                // A plain gradient step from x cannot improve further at this precision.
                last_opt = ensure_opt(&mut ev, &x, &dx, &mut gx, &mut gx_current, fx)?;
                if last_opt <= T::of(10.0) * tol {
                    status = SolveStatus::Converged;
                }
                break;
            }
            restarts += 1;
            if !gx_current {
                ev.value_and_grad(&dx, &mut gx)?;
                gx_current = true;
            }
            t = T::one();
            y.copy_from_slice(&x);
            dy.copy_from_slice(&dx);
            fy = fx;
            gy.copy_from_slice(&gx);
            just_restarted = true;
            continue;
        }

        let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) / T::of(2.0);
        let beta = (t - T::one()) / t_next;
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut dx_prev, &mut dx);
        x.copy_from_slice(&z);
        dx.copy_from_slice(&dz);
        fx = fz;
        for i in 0..nb {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        for v in 0..nv {
            dy[v] = dx[v] + beta * (dx[v] - dx_prev[v]);
        }
        fy = ev.value_and_grad(&dy, &mut gy)?;
        if beta == T::zero() {
            gx.copy_from_slice(&gy);
            gx_current = true;
        } else {
            gx_current = false;
        }
        if !fy.is_finite() {
            return Err(SolveError::Diverged { iteration: iterations });
        }
        t = t_next;
        just_restarted = false;
        lip = lip * relax;
        history.push(fx);

        let mut optimality = None;
        let window = config.stall_window;
        if history.len() > window && iterations >= next_check {
            let old = history[history.len() - 1 - window];
            if (old - fx).abs() <= tol * (T::one() + fx.abs()) {
                last_opt = ensure_opt(&mut ev, &x, &dx, &mut gx, &mut gx_current, fx)?;
                optimality = Some(last_opt.as_f64());
                if last_opt <= T::of(10.0) * tol {
                    status = SolveStatus::Converged;
                } else {
                    next_check = iterations + CHECK_EVERY;
                }
            }
        }
        trace.push(TraceRow {
            iteration: iterations,
            objective: fx.as_f64(),
            optimality,
            step: (T::one() / lip).as_f64(),
        });
    }

    let smoothed = fx;
    let final_opt = ensure_opt(&mut ev, &x, &dx, &mut gx, &mut gx_current, fx)?;
    if status != SolveStatus::Converged && final_opt <= T::of(10.0) * tol && last_opt <= T::of(10.0) * tol {
        status = SolveStatus::Converged;
    }
    let dose = a.dose(&x).map_err(|e| SolveError::Model(e.into()))?;
    let breakdown = model.evaluate_dose(&dose, T::zero(), None);
    Ok(PlanSolution {
        fluence: x,
        dose: DoseVector(dose),
        breakdown,
        diagnostics: Diagnostics {
            method: Method::AcceleratedProximal,
            status,
            iterations,
            final_objective: breakdown.total.as_f64(),
            smoothed_objective: smoothed.as_f64(),
            optimality_measure: final_opt.as_f64(),
            restarts,
            wall_time_s: started.elapsed().as_secs_f64(),
            trace,
        },
    })
}

fn ensure_opt<T: Scalar>(
    ev: &mut Evaluator<'_, '_, T>,
    x: &[T],
    dx: &[T],
    gx: &mut [T],
    gx_current: &mut bool,
    fx: T,
) -> Result<T, SolveError> {
    if !*gx_current {
        ev.value_and_grad(dx, gx)?;
        *gx_current = true;
    }
    Ok(projected_residual(x, gx, fx))
}

/// Secant estimate of the gradient's Lipschitz constant along a seeded
/// nonnegative direction scaled to deliver about 1 Gy at the hottest voxel.
fn probe_lipschitz<T: Scalar>(
    ev: &mut Evaluator<'_, '_, T>,
    g0: &[T],
    seed: u64,
) -> Result<T, SolveError> {
    let a = ev.model.influence();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<T> = (0..a.n_beamlets())
        .map(|_| T::of(0.5 + rng.random::<f64>()))
        .collect();
    let du = a.dose(&u).map_err(|e| SolveError::Model(e.into()))?;
    let peak = du.iter().copied().fold(T::zero(), T::max);
    let fallback = T::one();
    if peak <= T::zero() {
        return Ok(fallback);
    }
    let scale = T::one() / peak;
    u.iter_mut().for_each(|v| *v = *v * scale);
    let du: Vec<T> = du.iter().map(|&d| d * scale).collect();
    let mut g1 = vec![T::zero(); u.len()];
    ev.value_and_grad(&du, &mut g1)?;
    let num = g1
        .iter()
        .zip(g0)
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum::<T>()
        .sqrt();
    let den = u.iter().map(|&v| v * v).sum::<T>().sqrt();
    let est = num / den;
    Ok(if est.is_finite() && est > T::zero() { est } else { fallback })
}
