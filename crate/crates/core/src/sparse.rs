//! Sparse dose-influence matrix with deterministic forward and adjoint products.
//!
//! Entries are held twice: row-major for `A x` (voxel doses) and column-major
//! for `Aᵀ r` (beamlet gradients). Each output element is reduced by one worker
//! in storage order, so results are bit-identical for any thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;

/// Below this many stored entries products run on the calling thread.
const PARALLEL_NNZ: usize = 1 << 16;
const CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("entry ({voxel}, {beamlet}) outside {n_voxels}x{n_beamlets} matrix")]
    IndexOutOfRange {
        voxel: usize,
        beamlet: usize,
        n_voxels: usize,
        n_beamlets: usize,
    },
    #[error("entry ({voxel}, {beamlet}) has negative coefficient {value}")]
    NegativeValue { voxel: usize, beamlet: usize, value: f64 },
    #[error("entry ({voxel}, {beamlet}) is not finite")]
    NonFinite { voxel: usize, beamlet: usize },
    #[error("matrix dimensions exceed 32-bit index range")]
    TooLarge,
    #[error("vector length {found} does not match expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Sparse map from beamlet intensities to voxel doses (Gy per unit intensity).
#[derive(Debug, Clone, PartialEq)]
pub struct DoseInfluenceMatrix<T> {
    n_voxels: usize,
    n_beamlets: usize,
    row_ptr: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<T>,
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<T>,
}

impl<T: Scalar> DoseInfluenceMatrix<T> {
    /// Builds the canonical form: entries sorted by (voxel, beamlet) and
    /// repeated coordinates summed.
    pub fn from_triplets(
        n_voxels: usize,
        n_beamlets: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self, MatrixError> {
        if n_voxels > u32::MAX as usize || n_beamlets > u32::MAX as usize {
            return Err(MatrixError::TooLarge);
        }
        for &(voxel, beamlet, value) in &triplets {
            if voxel >= n_voxels || beamlet >= n_beamlets {
                return Err(MatrixError::IndexOutOfRange {
                    voxel,
                    beamlet,
                    n_voxels,
                    n_beamlets,
                });
            }
            if !value.is_finite() {
                return Err(MatrixError::NonFinite { voxel, beamlet });
            }
            if value < T::zero() {
                return Err(MatrixError::NegativeValue {
                    voxel,
                    beamlet,
                    value: value.as_f64(),
                });
            }
        }
        triplets.sort_unstable_by_key(|&(v, b, _)| (v, b));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(triplets.len());
        for (v, b, a) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == v && last.1 == b => last.2 = last.2 + a,
                _ => merged.push((v, b, a)),
            }
        }

        let mut row_ptr = vec![0usize; n_voxels + 1];
        let mut col_ptr = vec![0usize; n_beamlets + 1];
        for &(v, b, _) in &merged {
            row_ptr[v + 1] += 1;
            col_ptr[b + 1] += 1;
        }
        for i in 0..n_voxels {
            row_ptr[i + 1] += row_ptr[i];
        }
        for j in 0..n_beamlets {
            col_ptr[j + 1] += col_ptr[j];
        }
        let nnz = merged.len();
        let mut row_cols = Vec::with_capacity(nnz);
        let mut row_vals = Vec::with_capacity(nnz);
        let mut col_rows = vec![0u32; nnz];
        let mut col_vals = vec![T::zero(); nnz];
        let mut fill = col_ptr.clone();
        // Row-major traversal fills every column in increasing voxel order.
        for &(v, b, a) in &merged {
            row_cols.push(b as u32);
            row_vals.push(a);
            let slot = fill[b];
            col_rows[slot] = v as u32;
            col_vals[slot] = a;
            fill[b] += 1;
        }
        Ok(Self {
            n_voxels,
            n_beamlets,
            row_ptr,
            row_cols,
            row_vals,
            col_ptr,
            col_rows,
            col_vals,
        })
    }

    /// Dense row-major input, zeros skipped. Mostly useful in tests.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self, MatrixError> {
        let n_beamlets = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (v, row) in rows.iter().enumerate() {
            if row.len() != n_beamlets {
                return Err(MatrixError::LengthMismatch {
                    expected: n_beamlets,
                    found: row.len(),
                });
            }
            for (b, &a) in row.iter().enumerate() {
                if a != T::zero() {
                    triplets.push((v, b, a));
                }
            }
        }
        Self::from_triplets(rows.len(), n_beamlets, triplets)
    }

    pub fn n_voxels(&self) -> usize {
        self.n_voxels
    }

    pub fn n_beamlets(&self) -> usize {
        self.n_beamlets
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    /// Fraction of stored entries, in [0, 1].
    pub fn density(&self) -> f64 {
        let cells = self.n_voxels as f64 * self.n_beamlets as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    /// Canonical (voxel, beamlet, value) entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_voxels).flat_map(move |v| {
            let span = self.row_ptr[v]..self.row_ptr[v + 1];
            self.row_cols[span.clone()]
                .iter()
                .zip(&self.row_vals[span])
                .map(move |(&b, &a)| (v, b as usize, a))
        })
    }

    /// Entries of one voxel row as (beamlet, value).
    pub fn row(&self, voxel: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[voxel]..self.row_ptr[voxel + 1];
        self.row_cols[span.clone()]
            .iter()
            .zip(&self.row_vals[span])
            .map(|(&b, &a)| (b as usize, a))
    }

    /// Largest coefficient in each beamlet column.
    pub fn column_max(&self) -> Vec<T> {
        (0..self.n_beamlets)
            .map(|b| {
                self.col_vals[self.col_ptr[b]..self.col_ptr[b + 1]]
                    .iter()
                    .fold(T::zero(), |m, &a| m.max(a))
            })
            .collect()
    }

    /// `out = A x`.
    pub fn dose_into(&self, fluence: &[T], out: &mut [T]) -> Result<(), MatrixError> {
        check_len(self.n_beamlets, fluence.len())?;
        check_len(self.n_voxels, out.len())?;
        let kernel = |start: usize, chunk: &mut [T]| {
            for (i, slot) in chunk.iter_mut().enumerate() {
                let v = start + i;
                let mut acc = T::zero();
                for k in self.row_ptr[v]..self.row_ptr[v + 1] {
                    acc = acc + self.row_vals[k] * fluence[self.row_cols[k] as usize];
                }
                *slot = acc;
            }
        };
        if self.nnz() < PARALLEL_NNZ {
            kernel(0, out);
        } else {
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| kernel(c * CHUNK, chunk));
        }
        Ok(())
    }

    /// `A x` as a fresh vector.
    pub fn dose(&self, fluence: &[T]) -> Result<Vec<T>, MatrixError> {
        let mut out = vec![T::zero(); self.n_voxels];
        self.dose_into(fluence, &mut out)?;
        Ok(out)
    }

    /// `out = Aᵀ r`.
    pub fn adjoint_into(&self, voxel_values: &[T], out: &mut [T]) -> Result<(), MatrixError> {
        check_len(self.n_voxels, voxel_values.len())?;
        check_len(self.n_beamlets, out.len())?;
        let kernel = |start: usize, chunk: &mut [T]| {
            for (i, slot) in chunk.iter_mut().enumerate() {
                let b = start + i;
                let mut acc = T::zero();
                for k in self.col_ptr[b]..self.col_ptr[b + 1] {
                    acc = acc + self.col_vals[k] * voxel_values[self.col_rows[k] as usize];
                }
                *slot = acc;
            }
        };
        let chunk = (CHUNK / 16).max(1);
        if self.nnz() < PARALLEL_NNZ {
            kernel(0, out);
        } else {
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(c, part)| kernel(c * chunk, part));
        }
        Ok(())
    }

    pub fn adjoint(&self, voxel_values: &[T]) -> Result<Vec<T>, MatrixError> {
        let mut out = vec![T::zero(); self.n_beamlets];
        self.adjoint_into(voxel_values, &mut out)?;
        Ok(out)
    }

    /// Converts coefficients to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DoseInfluenceMatrix<U> {
        let conv = |v: &T| U::of(v.as_f64());
        DoseInfluenceMatrix {
            n_voxels: self.n_voxels,
            n_beamlets: self.n_beamlets,
            row_ptr: self.row_ptr.clone(),
            row_cols: self.row_cols.clone(),
            row_vals: self.row_vals.iter().map(conv).collect(),
            col_ptr: self.col_ptr.clone(),
            col_rows: self.col_rows.clone(),
            col_vals: self.col_vals.iter().map(conv).collect(),
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<(), MatrixError> {
    if expected == found {
        Ok(())
    } else {
        Err(MatrixError::LengthMismatch { expected, found })
    }
}
