//! Nonnegative matrices with no zero column and vectors of the closed cone.
//!
//! Norms follow the ℓ¹ convention throughout: `|x| = Σ|x_i|` for vectors,
//! and for a matrix the largest (`‖A‖`) and smallest (`v(A)`) column sums.
//! With these, every allowable matrix satisfies
//!
//! ```text
//! v(A)|x| ≤ |Ax| ≤ ‖A‖|x|        for x ≥ 0
//! ```
//!
//! and matrices whose rows are "balanced" up to a factor δ form a
//! semigroup on which the lower bound improves to `δ‖A‖|x|`.

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 64;

/// Relative slack used by every inequality check in this crate.
pub const REL_TOL: f64 = 1e-12;

/// `lhs ≤ rhs` up to [`REL_TOL`] scaled by the larger side.
pub fn le_rel(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_TOL * lhs.abs().max(rhs.abs())
}

fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Dimension(dim))
    }
}

/// Column-sum norms of an allowable matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    /// `‖A‖`, the largest column sum.
    pub col_max: f64,
    /// `v(A)`, the smallest column sum.
    pub col_min: f64,
    /// `max(1/v(A), ‖A‖)`, always at least 1.
    pub frak_n: f64,
}

/// A `d×d` nonnegative matrix in which every column has a positive entry.
///
/// Immutable after construction; the column-sum norms are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeMatrix {
    dim: usize,
    entries: Vec<f64>,
    col_max: f64,
    col_min: f64,
}

impl ConeMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for (k, &value) in entries.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidEntry {
                    row: k / dim,
                    col: k % dim,
                    value,
                });
            }
        }
        let mut col_max = f64::NEG_INFINITY;
        let mut col_min = f64::INFINITY;
        for j in 0..dim {
            let sum: f64 = (0..dim).map(|i| entries[i * dim + j]).sum();
            if sum <= 0.0 {
                return Err(Error::ZeroColumn(j));
            }
            col_max = col_max.max(sum);
            col_min = col_min.min(sum);
        }
        Ok(Self {
            dim,
            entries,
            col_max,
            col_min,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self::new(dim, entries)
    }

    /// The all-ones matrix `J`.
    pub fn ones(dim: usize) -> Result<Self> {
        Self::new(dim, vec![1.0; dim * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// `‖A‖`
    #[inline]
    pub fn col_max(&self) -> f64 {
        self.col_max
    }

    /// `v(A)`
    #[inline]
    pub fn col_min(&self) -> f64 {
        self.col_min
    }

    pub fn norms(&self) -> Norms {
        Norms {
            col_max: self.col_max,
            col_min: self.col_min,
            frak_n: (1.0 / self.col_min).max(self.col_max),
        }
    }

    /// `c·A` for `c > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Self::new(self.dim, self.entries.iter().map(|v| v * factor).collect())
    }

    /// Largest δ such that `A(i, j) ≥ δ A(i, k)` on every row with a
    /// positive entry; all-zero rows impose nothing.
    pub fn s_delta_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for row in self.entries.chunks(self.dim) {
            let max = row.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                margin = margin.min(min / max);
            }
        }
        margin
    }

    /// Smallest ratio `A(i, j) / Σ_k A(i, k)` over nonzero rows: how deep
    /// the rows of `A` (the images of the transposed action) sit inside the
    /// cone. At least `δ*(A)/d`.
    pub fn cone_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for row in self.entries.chunks(self.dim) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                margin = margin.min(min / sum);
            }
        }
        margin
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &ConeMatrix) -> Result<ConeMatrix> {
        if self.dim != rhs.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rhs.dim,
            });
        }
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * rhs.entries[k * d + j];
                }
            }
        }
        ConeMatrix::new(d, out)
    }

    /// `out = A x` without allocating.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, x: &ConePoint) -> Result<ConePoint> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let mut out = vec![0.0; self.dim];
        self.apply_into(x.coords(), &mut out);
        Ok(ConePoint { coords: out })
    }
}

/// A vector of the closed cone `ℝ₊^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConePoint {
    coords: Vec<f64>,
}

impl ConePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        for (index, &value) in coords.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidCoordinate { index, value });
            }
        }
        Ok(Self { coords })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Canonical basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut coords = vec![0.0; dim];
        coords[index] = 1.0;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `|x|`
    pub fn norm(&self) -> f64 {
        self.coords.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}
