use serde::Serialize;

use super::state::{ProductBundle, TrajectoryState};
use super::stopping::check_level;
use crate::cone::{ConeMatrix, ConePoint};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::runner::{Runner, Stream};
use crate::stats;

pub const DEFAULT_LADDER_CAP: u64 = 100_000_000;

/// One block `(Ã_ℓ, B̃_ℓ)` between consecutive ladder times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderBlock {
    pub length: u64,
    #[serde(skip)]
    pub a_tilde: ConeMatrix,
    /// `ln ‖Ã_ℓ‖`
    pub log_norm: f64,
    /// `ln |B̃_ℓ|`; `−∞` when the block noise vanished.
    pub b_log_radius: f64,
    #[serde(skip)]
    pub b_direction: Vec<f64>,
    /// `ln(1 + |B̃_ℓ|)`
    pub log_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderSample {
    pub a: f64,
    /// `τ_0 = 0 < τ_1 < … < τ_K`
    pub times: Vec<u64>,
    pub blocks: Vec<LadderBlock>,
    /// The step cap stopped the run before `k_max` blocks.
    pub truncated: bool,
    /// `ln ‖Ã_K ⋯ Ã_1‖`
    pub product_log_norm: f64,
    /// `|X_{τ_K} − rebuilt| / |X_{τ_K}|`, with the state rebuilt from the blocks.
    pub reconstruction_error: f64,
}

impl LadderSample {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// `‖Ã_K ⋯ Ã_1‖ ≤ a^{−K}` up to relative `tol` per block.
    pub fn norm_bound_holds(&self, tol: f64) -> bool {
        let k = self.k() as f64;
        self.product_log_norm <= -k * self.a.ln() + tol * k.max(1.0)
    }
}

fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Splits one path at the ladder times
/// `τ_k = inf{n > τ_{k−1} : a ‖A_{n, τ_{k−1}+1}‖ ≤ 1}` into `k_max` blocks,
/// or fewer if `cap` total steps run out first.
pub fn ladder_decomposition(
    spec: &EnsembleSpec,
    x0: &ConePoint,
    a: f64,
    k_max: usize,
    cap: u64,
    rng: &mut Stream,
) -> Result<LadderSample> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument(format!("ladder level a must exceed 1, got {a}")));
    }
    let barrier = check_level(a)?;
    if x0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x0.dim(),
        });
    }
    let d = spec.dim();
    let mut sampler = spec.sampler();
    let mut direct = TrajectoryState::new(x0);
    let mut at_last = direct.clone();
    let zero = ConePoint::zero(d)?;
    let mut block_product = ProductBundle::identity(d);
    let mut block_noise = TrajectoryState::new(&zero);
    let mut times = vec![0u64];
    let mut blocks = Vec::with_capacity(k_max);
    let mut n = 0u64;
    let mut start = 0u64;
    while blocks.len() < k_max && n < cap {
        let (m, b) = sampler.sample_pair(rng)?;
        n += 1;
        direct.step(m, b);
        block_product.step(m);
        block_noise.step(m, b);
        if block_product.log_norm() <= barrier {
            let b_log_radius = block_noise.log_radius();
            blocks.push(LadderBlock {
                length: n - start,
                a_tilde: block_product.to_matrix()?,
                log_norm: block_product.log_norm(),
                b_log_radius,
                b_direction: block_noise.direction().to_vec(),
                log_moment: log1p_exp(b_log_radius),
            });
            times.push(n);
            at_last = direct.clone();
            start = n;
            block_product = ProductBundle::identity(d);
            block_noise = TrajectoryState::new(&zero);
        }
    }
    if blocks.is_empty() {
        return Err(Error::Exceeded(cap));
    }
    let truncated = blocks.len() < k_max;

    // Rebuild X_{τ_K} by Horner's rule R_ℓ = Ã_ℓ R_{ℓ−1} + B̃_ℓ, R_0 = x0,
    // which expands to A_{τ_K,1}x0 + Σ Ã_K⋯Ã_{ℓ+1} B̃_ℓ.
    let mut rebuilt = TrajectoryState::new(x0);
    let mut product = ProductBundle::identity(d);
    for block in &blocks {
        rebuilt.step_log(&block.a_tilde, block.b_log_radius, &block.b_direction);
        product.step(&block.a_tilde);
    }
    Ok(LadderSample {
        a,
        reconstruction_error: rebuilt.relative_distance(&at_last),
        product_log_norm: product.log_norm(),
        times,
        blocks,
        truncated,
    })
}

/// Two-sample KS comparison of one block statistic between two block indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockKs {
    pub quantity: &'static str,
    pub first_index: usize,
    pub second_index: usize,
    pub statistic: f64,
    /// 5% critical value.
    pub critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderStudy {
    pub a: f64,
    pub samples: usize,
    pub blocks: usize,
    /// Samples cut short by the cap, including those with no block at all.
    pub truncated_samples: usize,
    /// Samples violating `‖Ã_K ⋯ Ã_1‖ ≤ a^{−K}`.
    pub norm_bound_violations: usize,
    pub max_reconstruction_error: f64,
    /// Largest `ln ‖Ã_ℓ‖ + ln a` over all blocks; at most zero.
    pub max_block_excess: f64,
    pub ks: Vec<BlockKs>,
    #[serde(skip)]
    pub paths: Vec<LadderSample>,
}

impl LadderStudy {
    pub fn ks_pass(&self) -> bool {
        self.ks.iter().all(|k| k.pass)
    }
}

/// Relative slack allowed in the norm bound per block.
pub const LADDER_NORM_TOL: f64 = 1e-12;

/// Runs `samples` ladder decompositions (path `k` on stream `k`) and
/// compares the first two block indices by KS on `ln ‖Ã‖`, the block
/// length and `ln(1 + |B̃|)`. Blocks cut short by the cap are excluded.
pub fn ladder_study(
    spec: &EnsembleSpec,
    x0: &ConePoint,
    a: f64,
    k_max: usize,
    samples: usize,
    cap: u64,
    runner: &Runner,
) -> Result<LadderStudy> {
    if k_max < 2 || samples == 0 {
        return Err(Error::InvalidArgument("ladder study needs k_max >= 2 and at least one sample".into()));
    }
    let mut paths = Vec::with_capacity(samples);
    let mut no_block = 0;
    for run in runner.map(samples, |k| ladder_decomposition(spec, x0, a, k_max, cap, &mut runner.stream(k as u64))) {
        match run {
            Ok(p) => paths.push(p),
            Err(Error::Exceeded(_)) => no_block += 1,
            Err(e) => return Err(e),
        }
    }
    let mut norm_bound_violations = 0;
    let mut max_reconstruction_error: f64 = 0.0;
    let mut max_block_excess = f64::NEG_INFINITY;
    for p in &paths {
        if !p.norm_bound_holds(LADDER_NORM_TOL) {
            norm_bound_violations += 1;
        }
        max_reconstruction_error = max_reconstruction_error.max(p.reconstruction_error);
        for b in &p.blocks {
            max_block_excess = max_block_excess.max(b.log_norm + a.ln());
        }
    }
    let column = |i: usize, f: fn(&LadderBlock) -> f64| -> Vec<f64> {
        paths.iter().filter_map(|p| p.blocks.get(i)).map(f).collect()
    };
    let quantities: [(&'static str, fn(&LadderBlock) -> f64); 3] = [
        ("log_norm", |b| b.log_norm),
        ("length", |b| b.length as f64),
        ("log_moment", |b| b.log_moment),
    ];
    let mut ks = Vec::new();
    for (quantity, f) in quantities {
        let (x, y) = (column(0, f), column(1, f));
        if x.is_empty() || y.is_empty() {
            continue;
        }
        let statistic = stats::ks_two_sample(&x, &y);
        let critical = stats::ks_two_sample_critical(x.len(), y.len(), 0.05);
        ks.push(BlockKs {
            quantity,
            first_index: 1,
            second_index: 2,
            statistic,
            critical,
            pass: statistic <= critical,
        });
    }
    Ok(LadderStudy {
        a,
        samples,
        blocks: paths.iter().map(|p| p.k()).sum(),
        truncated_samples: no_block + paths.iter().filter(|p| p.truncated).count(),
        norm_bound_violations,
        max_reconstruction_error,
        max_block_excess,
        ks,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Runner;

    fn spec(json: &str) -> EnsembleSpec {
        EnsembleSpec::from_json(json).unwrap()
    }

    #[test]
    fn deterministic_decay_has_ladder_times_every_three_steps() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,0]}]}"#);
        let x0 = ConePoint::new(vec![1.0, 2.0]).unwrap();
        let l = ladder_decomposition(&s, &x0, 8.0, 5, 1000, &mut Runner::new(0).stream(0)).unwrap();
        assert_eq!(l.times, vec![0, 3, 6, 9, 12, 15]);
        assert!(!l.truncated);
        assert!(l.norm_bound_holds(1e-12));
        assert!(l.reconstruction_error < 1e-12, "{}", l.reconstruction_error);
    }

    #[test]
    fn reconstruction_and_norm_bound_on_a_generator_law() {
        let s = spec(
            r#"{"dim": 3, "delta": 0.5, "scale": 0.2,
                "generator": {"entry_log10_range": [-0.5, 0.5], "b_log10_range": [-1, 1]}}"#,
        );
        let x0 = ConePoint::new(vec![0.3, 0.0, 2.0]).unwrap();
        let r = Runner::new(7);
        for k in 0..50 {
            let l = ladder_decomposition(&s, &x0, 2.0, 20, 1_000_000, &mut r.stream(k)).unwrap();
            assert!(l.norm_bound_holds(1e-12));
            assert!(l.reconstruction_error < 1e-9, "{}", l.reconstruction_error);
            for b in &l.blocks {
                assert!(2.0 * b.a_tilde.col_max() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn cap_before_first_ladder_time_is_an_error() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[1,1],[1,1]], "B": [1,1]}]}"#);
        let x0 = ConePoint::basis(2, 0).unwrap();
        let err = ladder_decomposition(&s, &x0, 2.0, 3, 100, &mut Runner::new(0).stream(0)).unwrap_err();
        assert!(matches!(err, Error::Exceeded(100)));
    }

    #[test]
    fn truncation_is_flagged() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,0]}]}"#);
        let x0 = ConePoint::basis(2, 0).unwrap();
        let l = ladder_decomposition(&s, &x0, 8.0, 10, 7, &mut Runner::new(0).stream(0)).unwrap();
        assert!(l.truncated);
        assert_eq!(l.k(), 2);
    }

    #[test]
    fn rejects_level_one() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,0]}]}"#);
        let x0 = ConePoint::basis(2, 0).unwrap();
        assert!(ladder_decomposition(&s, &x0, 1.0, 1, 10, &mut Runner::new(0).stream(0)).is_err());
    }

    #[test]
    fn study_on_the_rank_one_mixture() {
        let s = spec(
            r#"{"dim": 2, "delta": 1, "atoms": [
                {"weight": 0.5, "A": [[1,1],[1,1]], "B": [1,1]},
                {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,1]}]}"#,
        );
        let x0 = ConePoint::basis(2, 0).unwrap();
        let st = ladder_study(&s, &x0, 2.0, 2, 2000, 10_000, &Runner::new(4)).unwrap();
        assert_eq!(st.norm_bound_violations, 0);
        assert!(st.max_block_excess <= 1e-12);
        assert!(st.max_reconstruction_error < 1e-9);
        assert!(st.truncated_samples > 0);
        assert_eq!(st.ks.len(), 3);
    }
}
