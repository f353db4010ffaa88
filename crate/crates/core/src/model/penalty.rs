//! Per-voxel penalties with the auxiliary under/overdose variables eliminated.
//!
//! At a fixed dose `d` every auxiliary variable has a closed-form optimum:
//!
//! * target underdose `(lower - d)⁺`, overdose `(d - upper)⁺`
//! * organ overdose `(d - pred)⁺`
//! * structure-max overdose `(d - M)⁺` and reduction credit
//!   `(χM - (d - ζM)⁺)⁺`
//!
//! Each function returns `(value, d value / d dose)`. With `delta > 0` the
//! absolute value and the linear hinges are Huber-smoothed over a band of
//! width `delta` Gy; `delta = 0` gives the exact penalty, differentiated with
//! zero at every kink.

use super::Coefficients;
use crate::scalar::Scalar;

/// Importance coefficients converted to the working scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights<T> {
    pub psi: [T; 5],
    pub xi: [T; 4],
}

impl<T: Scalar> PenaltyWeights<T> {
    pub fn new(c: &Coefficients) -> Self {
        Self {
            psi: c.psi().map(T::of),
            xi: c.xi().map(T::of),
        }
    }
}

/// `(t)⁺`, smoothed quadratically on `[0, delta]`.
#[inline]
pub fn hinge<T: Scalar>(t: T, delta: T) -> (T, T) {
    if t <= T::zero() {
        (T::zero(), T::zero())
    } else if t < delta {
        (t * t / (delta + delta), t / delta)
    } else {
        (t - delta / T::of(2.0), T::one())
    }
}

/// `|t|` (Huber with half-width `delta`).
#[inline]
pub fn abs<T: Scalar>(t: T, delta: T) -> (T, T) {
    let a = t.abs();
    if a < delta {
        (t * t / (delta + delta), t / delta)
    } else if t > T::zero() {
        (a - delta / T::of(2.0), T::one())
    } else if t < T::zero() {
        (a - delta / T::of(2.0), -T::one())
    } else {
        (T::zero(), T::zero())
    }
}

/// `((t)⁺)²`, differentiable everywhere.
#[inline]
pub fn squared_hinge<T: Scalar>(t: T) -> (T, T) {
    if t > T::zero() {
        (t * t, t + t)
    } else {
        (T::zero(), T::zero())
    }
}

/// Target voxel. `weight` is ω_v divided by the total target weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtvVoxelParams<T> {
    pub voxel: usize,
    pub weight: T,
    /// min(prediction, prescription)
    pub lower: T,
    /// max(prediction, prescription)
    pub upper: T,
    pub pres: T,
}

impl<T: Scalar> PtvVoxelParams<T> {
    #[inline]
    pub fn penalty(&self, w: &PenaltyWeights<T>, d: T, delta: T) -> (T, T) {
        let (under, dunder) = squared_hinge(self.lower - d);
        let (over, dover) = squared_hinge(d - self.upper);
        let (dev, ddev) = abs(self.pres - d, delta);
        let value = w.psi[0] * under + w.psi[1] * over + w.xi[0] * dev;
        let slope = -w.psi[0] * dunder + w.psi[1] * dover - w.xi[0] * ddev;
        (self.weight * value, self.weight * slope)
    }
}

/// Organ voxel. `weight` is ω_v divided by the total organ weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OarVoxelParams<T> {
    pub voxel: usize,
    pub weight: T,
    pub pred: T,
}

impl<T: Scalar> OarVoxelParams<T> {
    #[inline]
    pub fn penalty(&self, w: &PenaltyWeights<T>, d: T) -> (T, T) {
        let (over, dover) = squared_hinge(d - self.pred);
        (
            self.weight * (w.psi[2] * over + w.xi[1] * d),
            self.weight * (w.psi[2] * dover + w.xi[1]),
        )
    }
}

/// Voxel of a structure with a maximum-dose term. `weight` is ω_v divided by
/// the total weight over all such (voxel, structure) memberships.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxVoxelParams<T> {
    pub voxel: usize,
    pub weight: T,
    /// Maximum predicted dose of the structure.
    pub max_pred: T,
    pub zeta: T,
    pub chi: T,
}

impl<T: Scalar> MaxVoxelParams<T> {
    /// Largest feasible reduction credit at dose `d`, clamped at zero.
    #[inline]
    pub fn reduction_credit(&self, d: T) -> T {
        let m = self.max_pred;
        (self.chi * m - (d - self.zeta * m).pos()).pos()
    }

    #[inline]
    pub fn penalty(&self, w: &PenaltyWeights<T>, d: T, delta: T) -> (T, T) {
        let m = self.max_pred;
        let (psi4, xi3) = (w.psi[3], w.xi[2]);
        let (value, slope) = if delta > T::zero() {
            // Same function written as a constant plus signed hinges, so each
            // kink can be smoothed separately.
            let (h1, s1) = hinge(d - self.zeta * m, delta);
            let (h2, s2) = hinge(d - m, delta);
            let (h3, s3) = hinge(d - (self.zeta + self.chi) * m, delta);
            (
                -xi3 * self.chi * m + xi3 * h1 + psi4 * h2 - xi3 * h3,
                xi3 * s1 + psi4 * s2 - xi3 * s3,
            )
        } else {
            let over = (d - m).pos();
            let credit = self.reduction_credit(d);
            let mut slope = if d > m { psi4 } else { T::zero() };
            if d > self.zeta * m && credit > T::zero() {
                slope = slope + xi3;
            }
            (psi4 * over - xi3 * credit, slope)
        };
        (self.weight * value, self.weight * slope)
    }
}

/// Any per-voxel term, for standalone evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VoxelPenaltyParams<T> {
    Ptv(PtvVoxelParams<T>),
    Oar(OarVoxelParams<T>),
    OarMax(MaxVoxelParams<T>),
}

/// Exact contribution of one voxel term at dose `d`.
pub fn voxel_penalty<T: Scalar>(params: &VoxelPenaltyParams<T>, coeffs: &Coefficients, d: T) -> T {
    let w = PenaltyWeights::new(coeffs);
    match params {
        VoxelPenaltyParams::Ptv(p) => p.penalty(&w, d, T::zero()).0,
        VoxelPenaltyParams::Oar(p) => p.penalty(&w, d).0,
        VoxelPenaltyParams::OarMax(p) => p.penalty(&w, d, T::zero()).0,
    }
}
