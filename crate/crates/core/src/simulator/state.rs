use crate::cone::{ConeMatrix, ConePoint};
use crate::error::{Error, Result};
use crate::metric::{distance_unchecked, Direction};

/// Neumaier-compensated running sum. Log-norm accumulators use it so that
/// products landing exactly on a barrier (lattice walks) are detected
/// without a loose tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogSum {
    sum: f64,
    comp: f64,
}

impl LogSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// The columns `A_{n,1} e_j` of a running product, each kept as a log-scale
/// and a direction, so `‖A_{n,1}‖ = max_j exp(log_scale_j)` never
/// overflows.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBundle {
    dim: usize,
    log_scales: Vec<LogSum>,
    /// column `j` occupies `columns[j*d..(j+1)*d]`
    columns: Vec<f64>,
    scratch: Vec<f64>,
    diameter: f64,
    track_diameter: bool,
}

impl ProductBundle {
    /// The empty product (identity).
    pub fn identity(dim: usize) -> Self {
        let mut columns = vec![0.0; dim * dim];
        for j in 0..dim {
            columns[j * dim + j] = 1.0;
        }
        Self {
            dim,
            log_scales: vec![LogSum::default(); dim],
            columns,
            scratch: vec![0.0; dim],
            diameter: 1.0,
            track_diameter: false,
        }
    }

    /// Also maintain the projective diameter of the columns.
    pub fn tracking_diameter(mut self) -> Self {
        self.track_diameter = true;
        self.diameter = self.current_diameter();
        self
    }

    pub fn reset(&mut self) {
        let track = self.track_diameter;
        *self = Self::identity(self.dim);
        if track {
            *self = std::mem::replace(self, Self::identity(0)).tracking_diameter();
        }
    }

    /// Left-multiplies the product by `a`.
    #[inline]
    pub fn step(&mut self, a: &ConeMatrix) {
        let d = self.dim;
        for j in 0..d {
            let col = &mut self.columns[j * d..(j + 1) * d];
            a.apply_into(col, &mut self.scratch);
            let norm: f64 = self.scratch.iter().sum();
            self.log_scales[j].add(norm.ln());
            for (c, s) in col.iter_mut().zip(&self.scratch) {
                *c = s / norm;
            }
        }
        if self.track_diameter {
            self.diameter = self.diameter.min(self.current_diameter());
        }
    }

    /// `ln ‖A_{n,1}‖`
    #[inline]
    pub fn log_norm(&self) -> f64 {
        self.log_scales
            .iter()
            .map(LogSum::value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `ln v(A_{n,1})`
    pub fn log_col_min(&self) -> f64 {
        self.log_scales
            .iter()
            .map(LogSum::value)
            .fold(f64::INFINITY, f64::min)
    }

    fn current_diameter(&self) -> f64 {
        let d = self.dim;
        let mut diameter: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                diameter = diameter.max(distance_unchecked(
                    &self.columns[i * d..(i + 1) * d],
                    &self.columns[j * d..(j + 1) * d],
                ));
            }
        }
        diameter
    }

    /// Running projective diameter of the column directions
    /// (nonincreasing in `n`); 1 for the identity.
    pub fn diameter(&self) -> f64 {
        if self.track_diameter {
            self.diameter
        } else {
            self.current_diameter()
        }
    }

    /// Materializes the product. Only sensible while its norm is moderate.
    pub fn to_matrix(&self) -> Result<ConeMatrix> {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for j in 0..d {
            let scale = self.log_scales[j].value().exp();
            for i in 0..d {
                entries[i * d + j] = scale * self.columns[j * d + i];
            }
        }
        ConeMatrix::new(d, entries)
    }
}

/// `X_n = e^u · w` with `w` on the simplex; `u = −∞` encodes `X_n = 0`.
/// Optionally carries the product `A_{n,1}` as a [`ProductBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    log_radius: f64,
    direction: Vec<f64>,
    step_count: u64,
    scratch: Vec<f64>,
    product: Option<ProductBundle>,
}

impl TrajectoryState {
    pub fn new(x0: &ConePoint) -> Self {
        let d = x0.dim();
        let norm = x0.norm();
        let (log_radius, direction) = if norm > 0.0 {
            (norm.ln(), x0.coords().iter().map(|c| c / norm).collect())
        } else {
            (f64::NEG_INFINITY, vec![1.0 / d as f64; d])
        };
        Self {
            log_radius,
            direction,
            step_count: 0,
            scratch: vec![0.0; d],
            product: None,
        }
    }

    /// Also track `ln ‖A_{n,1}‖` and the projective diameter of the product.
    pub fn with_product(mut self) -> Self {
        self.product = Some(ProductBundle::identity(self.direction.len()).tracking_diameter());
        self
    }

    pub fn product(&self) -> Option<&ProductBundle> {
        self.product.as_ref()
    }

    /// `ln ‖A_{n,1}‖`, if tracked.
    pub fn product_log_norm(&self) -> Option<f64> {
        self.product.as_ref().map(ProductBundle::log_norm)
    }

    /// Running diameter of `A_{n,1}·𝕏`, if tracked.
    pub fn product_direction_diameter(&self) -> Option<f64> {
        self.product.as_ref().map(ProductBundle::diameter)
    }

    /// `u = ln |X_n|`
    #[inline]
    pub fn log_radius(&self) -> f64 {
        self.log_radius
    }

    pub fn radius(&self) -> f64 {
        self.log_radius.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.log_radius == f64::NEG_INFINITY
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn to_direction(&self) -> Direction {
        Direction::from_normalized(self.direction.clone())
    }

    /// `X_n` in plain coordinates (overflows to infinity for huge radii).
    pub fn to_point(&self) -> Vec<f64> {
        let r = self.radius();
        self.direction.iter().map(|w| r * w).collect()
    }

    /// `X_{n+1} = A X_n + B`, computed as
    /// `e^M (e^{u−M} A w + e^{ln|B|−M} B/|B|)` with `M = max(u, ln|B|)`,
    /// so neither term can overflow whatever the magnitudes.
    #[inline]
    pub fn step(&mut self, a: &ConeMatrix, b: &ConePoint) {
        let norm_b = b.norm();
        if norm_b > 0.0 {
            self.step_scaled(a, norm_b.ln(), b.coords(), 1.0 / norm_b);
        } else {
            self.step_scaled(a, f64::NEG_INFINITY, b.coords(), 0.0);
        }
    }

    /// Step with the noise given as `e^{log_b} · b_dir` (`b_dir` on the simplex).
    pub fn step_log(&mut self, a: &ConeMatrix, log_b: f64, b_dir: &[f64]) {
        self.step_scaled(a, log_b, b_dir, 1.0);
    }

    /// `B = e^{log_b} · b_coords · b_factor`, with `b_coords · b_factor` summing to 1.
    #[inline]
    fn step_scaled(&mut self, a: &ConeMatrix, log_b: f64, b_coords: &[f64], b_factor: f64) {
        self.step_count += 1;
        if let Some(p) = self.product.as_mut() {
            p.step(a);
        }
        if self.log_radius == f64::NEG_INFINITY {
            if log_b > f64::NEG_INFINITY {
                self.log_radius = log_b;
                for (w, bi) in self.direction.iter_mut().zip(b_coords) {
                    *w = bi * b_factor;
                }
            }
            return;
        }
        a.apply_into(&self.direction, &mut self.scratch);
        let top = self.log_radius.max(log_b);
        let cx = (self.log_radius - top).exp();
        let cb = if log_b > f64::NEG_INFINITY { (log_b - top).exp() * b_factor } else { 0.0 };
        let mut sum = 0.0;
        for (s, bi) in self.scratch.iter_mut().zip(b_coords) {
            *s = cx * *s + cb * bi;
            sum += *s;
        }
        self.log_radius = top + sum.ln();
        for (w, s) in self.direction.iter_mut().zip(&self.scratch) {
            *w = s / sum;
        }
    }

    /// `|X − Y| / |Y|` for two states, computed without leaving log scale.
    pub fn relative_distance(&self, reference: &TrajectoryState) -> f64 {
        if reference.is_zero() {
            return if self.is_zero() { 0.0 } else { f64::INFINITY };
        }
        let ratio = (self.log_radius - reference.log_radius).exp();
        self.direction
            .iter()
            .zip(&reference.direction)
            .map(|(x, y)| (ratio * x - y).abs())
            .sum()
    }
}

/// A signed vector `e^ℓ s` with `Σ|s_i| = 1`, evolved linearly by the
/// same matrices as the chain. Tracks `X_n^x − X_n^y = A_{n,1}(x − y)`
/// without the cancellation of subtracting two huge states.
#[derive(Debug, Clone)]
pub struct SignedLogVec {
    log_scale: LogSum,
    zero: bool,
    coords: Vec<f64>,
    scratch: Vec<f64>,
}

impl SignedLogVec {
    pub fn new(v: &[f64]) -> Result<Self> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite difference vector".into()));
        }
        let norm: f64 = v.iter().map(|c| c.abs()).sum();
        let mut log_scale = LogSum::default();
        let coords = if norm > 0.0 {
            log_scale.add(norm.ln());
            v.iter().map(|c| c / norm).collect()
        } else {
            vec![0.0; v.len()]
        };
        Ok(Self {
            log_scale,
            zero: norm == 0.0,
            coords,
            scratch: vec![0.0; v.len()],
        })
    }

    /// `ln |v|` in the ℓ¹ norm; `−∞` once the vector is exactly zero.
    #[inline]
    pub fn log_norm(&self) -> f64 {
        if self.zero {
            f64::NEG_INFINITY
        } else {
            self.log_scale.value()
        }
    }

    /// Normalized coordinates (`Σ|c_i| = 1`).
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn step(&mut self, a: &ConeMatrix) {
        if self.zero {
            return;
        }
        a.apply_into(&self.coords, &mut self.scratch);
        let norm: f64 = self.scratch.iter().map(|c| c.abs()).sum();
        if norm == 0.0 {
            self.zero = true;
            return;
        }
        self.log_scale.add(norm.ln());
        for (c, s) in self.coords.iter_mut().zip(&self.scratch) {
            *c = s / norm;
        }
    }
}
