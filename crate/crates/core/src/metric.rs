//! The Hennion distance on the simplex and the projective action of
//! allowable matrices.
//!
//! For nonzero `x, y ≥ 0` let `m(x, y) = min { x_i / y_i : y_i > 0 }`. The
//! distance
//!
//! ```text
//! 𝔡(x, y) = (1 − m(x,y) m(y,x)) / (1 + m(x,y) m(y,x))
//! ```
//!
//! is invariant under positive rescaling of either argument, bounded by 1,
//! and equal to `tanh(h/2)` where `h` is Hilbert's projective metric. Every
//! allowable matrix is a weak contraction for it; matrices in `S_δ` contract
//! by at least `(1 − δ⁴)/(1 + δ⁴)`.

use crate::cone::{ConeMatrix, ConePoint};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the simplex `{x ≥ 0 : |x| = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    coords: Vec<f64>,
}

impl Direction {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let point = ConePoint::new(coords)?;
        let sum = point.norm();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "direction coordinates sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            coords: point.coords().to_vec(),
        })
    }

    /// `x / |x|`.
    pub fn from_point(x: &ConePoint) -> Result<Self> {
        Self::normalize(x.coords().to_vec())
    }

    pub(crate) fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let sum: f64 = coords.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::ZeroVector);
        }
        coords.iter_mut().for_each(|c| *c /= sum);
        Ok(Self { coords })
    }

    /// Trusted constructor for hot loops; `coords` must already sum to one.
    pub(crate) fn from_normalized(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        Self::normalize(ConePoint::new(vec![1.0; dim])?.coords().to_vec())
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        Self::from_point(&ConePoint::basis(dim, index)?)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_point(&self) -> ConePoint {
        ConePoint::new(self.coords.clone()).expect("simplex points lie in the cone")
    }
}

/// `ρ_δ = (1 − δ⁴)/(1 + δ⁴)`, the uniform contraction rate on `S_δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConstants {
    pub delta: f64,
    pub rho_delta: f64,
}

impl MetricConstants {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1], got {delta}"
            )));
        }
        let d4 = delta.powi(4);
        Ok(Self {
            delta,
            rho_delta: (1.0 - d4) / (1.0 + d4),
        })
    }
}

/// `m(x, y)`; indices with `y_i = 0` are ignored. Returns 0 when the
/// remaining ratios are all zero or none are left.
fn min_ratio(x: &[f64], y: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for (&xi, &yi) in x.iter().zip(y) {
        if yi > 0.0 {
            m = m.min(xi / yi);
        }
    }
    if m.is_finite() {
        m
    } else {
        0.0
    }
}

/// Hennion distance between two nonzero vectors of the cone (raw slices,
/// not necessarily normalized).
pub fn cone_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let positive = |v: &[f64]| v.iter().any(|&c| c > 0.0);
    if !positive(x) || !positive(y) {
        return Err(Error::ZeroVector);
    }
    Ok(distance_unchecked(x, y))
}

#[inline]
pub(crate) fn distance_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let p = min_ratio(x, y) * min_ratio(y, x);
    ((1.0 - p) / (1.0 + p)).clamp(0.0, 1.0)
}

/// `𝔡(x, y)` on the simplex.
pub fn hennion_distance(x: &Direction, y: &Direction) -> Result<f64> {
    cone_distance(&x.coords, &y.coords)
}

/// `(A·x, ρ(A, x))` with `A·x = Ax/|Ax|` and `ρ(A, x) = ln |Ax|`.
pub fn projective_action(a: &ConeMatrix, x: &Direction) -> Result<(Direction, f64)> {
    if a.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: x.dim(),
        });
    }
    let mut image = vec![0.0; a.dim()];
    a.apply_into(&x.coords, &mut image);
    let norm: f64 = image.iter().sum();
    image.iter_mut().for_each(|c| *c /= norm);
    Ok((Direction::from_normalized(image), norm.ln()))
}

/// Columns of `A`, i.e. the images `A e_j`.
fn columns(a: &ConeMatrix) -> Vec<Vec<f64>> {
    let d = a.dim();
    (0..d)
        .map(|j| (0..d).map(|i| a.get(i, j)).collect())
        .collect()
}

/// Largest distance between two vectors of a finite family.
pub(crate) fn family_diameter(vectors: &[Vec<f64>]) -> f64 {
    let mut diameter: f64 = 0.0;
    for (i, u) in vectors.iter().enumerate() {
        for v in &vectors[i + 1..] {
            diameter = diameter.max(distance_unchecked(u, v));
        }
    }
    diameter
}

/// `[A] = sup 𝔡(A·x, A·y)`, evaluated on pairs of basis vectors: the
/// projective diameter of the image of the simplex is attained on its
/// extreme rays.
pub fn contraction_coefficient(a: &ConeMatrix) -> f64 {
    family_diameter(&columns(a))
}

/// Replaces every all-zero row of `A` by the first row with a positive
/// entry. The result has a positive entry in every row and column and
/// induces the same distances `𝔡(Ax, Ay)`.
pub fn complete_zero_rows(a: &ConeMatrix) -> Result<ConeMatrix> {
    let d = a.dim();
    let anchor = (0..d)
        .find(|&i| a.row(i).iter().any(|&v| v > 0.0))
        .ok_or(Error::AllRowsZero)?;
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        let source = if a.row(i).iter().any(|&v| v > 0.0) {
            i
        } else {
            anchor
        };
        entries.extend_from_slice(a.row(source));
    }
    ConeMatrix::new(d, entries)
}
