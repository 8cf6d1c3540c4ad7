//! Exact references for rank-one ensembles. When every matrix is a
//! multiple of the all-ones matrix `J`, `|βJx| = dβ|x|`, so the norm of
//! the chain follows the scalar recursion `r' = e^{ξ} r + |B|` and
//! `ln ‖A_{n,1}‖` is a random walk with i.i.d. increments `ξ`.

use rand::distributions::{Distribution, WeightedIndex};
use serde::Serialize;

use crate::cone::ConePoint;
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::runner::{Runner, Stream};
use crate::simulator::{check_level, stopping_time, StopMode, TrajectoryState};

const RANK_ONE_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 1e-9;
const MAX_LATTICE_DENOMINATOR: u32 = 64;
/// Probabilities below this are dropped from the dynamic program.
pub const PRUNE: f64 = 1e-40;
pub const MAX_ORACLE_STEPS: usize = 100_000;

/// Law of the scalar reduction, one entry per atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarWalkSpec {
    pub probabilities: Vec<f64>,
    /// `ln(d·β·scale)` per atom.
    pub increments: Vec<f64>,
    /// `|B|` per atom.
    pub affine: Vec<f64>,
}

impl ScalarWalkSpec {
    pub fn mean_increment(&self) -> f64 {
        self.probabilities.iter().zip(&self.increments).map(|(p, x)| p * x).sum()
    }

    /// Sampler of atom indices that consumes randomness exactly as the
    /// ensemble's own atom sampler, so both can share a stream.
    pub fn index_sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.probabilities.iter().copied()).expect("validated weights")
    }

    /// `r_n` for `n` steps of `r' = e^{ξ} r + |B|` from `r0`, on `rng`.
    pub fn simulate_radius(&self, r0: f64, n: usize, rng: &mut Stream) -> Vec<f64> {
        let index = self.index_sampler();
        let factors: Vec<f64> = self.increments.iter().map(|x| x.exp()).collect();
        let mut r = r0;
        (0..n)
            .map(|_| {
                let k = index.sample(rng);
                r = factors[k] * r + self.affine[k];
                r
            })
            .collect()
    }
}

/// Reduces an ensemble whose atoms are all positive multiples of `J`.
pub fn rank_one_reduce(spec: &EnsembleSpec) -> Result<ScalarWalkSpec> {
    let atoms = spec
        .atoms()
        .ok_or_else(|| Error::InvalidSpec("rank-one reduction needs a finite list of atoms".into()))?;
    let d = spec.dim() as f64;
    let mut out = ScalarWalkSpec {
        probabilities: Vec::with_capacity(atoms.len()),
        increments: Vec::with_capacity(atoms.len()),
        affine: Vec::with_capacity(atoms.len()),
    };
    for (k, atom) in atoms.iter().enumerate() {
        let entries = atom.a.entries();
        let beta = entries[0];
        if !(beta > 0.0) || entries.iter().any(|&v| (v - beta).abs() > RANK_ONE_TOL * beta) {
            return Err(Error::NotRankOne(k));
        }
        out.probabilities.push(atom.weight);
        out.increments.push((d * beta * spec.scale()).ln());
        out.affine.push(atom.b.norm());
    }
    Ok(out)
}

/// Common step `h` with every increment an integer multiple of it, and
/// those integers.
pub fn lattice(increments: &[f64]) -> Result<(f64, Vec<i64>)> {
    let nonzero: Vec<f64> = increments.iter().copied().filter(|x| *x != 0.0).collect();
    let Some(base) = nonzero.iter().map(|x| x.abs()).reduce(f64::min) else {
        return Ok((1.0, vec![0; increments.len()]));
    };
    for q in 1..=MAX_LATTICE_DENOMINATOR {
        let h = base / q as f64;
        let steps: Vec<f64> = increments.iter().map(|x| x / h).collect();
        if steps.iter().all(|s| (s - s.round()).abs() <= LATTICE_TOL * s.abs().max(1.0)) {
            return Ok((h, steps.iter().map(|s| s.round() as i64).collect()));
        }
    }
    Err(Error::NonLattice(increments.to_vec()))
}

/// `P(τ > n)` for `n = 1..=n_max`, where `τ` is the first `n` with
/// `S_n ≤ barrier` for the walk `S_n` with the given increments.
///
/// Exact up to the dropped mass below [`PRUNE`] per lattice site.
pub fn first_passage_survival(walk: &ScalarWalkSpec, barrier: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(barrier < 0.0) {
        return Err(Error::InvalidArgument(format!("barrier must be negative, got {barrier}")));
    }
    if n_max == 0 || n_max > MAX_ORACLE_STEPS {
        return Err(Error::InvalidArgument(format!("n_max must lie in 1..={MAX_ORACLE_STEPS}, got {n_max}")));
    }
    let (h, steps) = lattice(&walk.increments)?;
    // stopped once the lattice position k satisfies k ≤ floor(barrier/h)
    let stop = (barrier / h + LATTICE_TOL).floor() as i64;
    let lowest_alive = stop + 1;
    let max_up = steps.iter().copied().max().unwrap_or(0).max(0);
    // alive positions lowest_alive ..= lowest_alive + width − 1
    let width = (-lowest_alive + 1 + max_up * n_max as i64).max(1) as usize;
    let offset = lowest_alive;
    let mut prob = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    prob[(0 - offset) as usize] = 1.0;
    let (mut lo, mut hi) = ((0 - offset) as usize, (0 - offset) as usize + 1);
    let moves: Vec<(i64, f64)> = steps
        .iter()
        .zip(&walk.probabilities)
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| (*s, *p))
        .collect();
    let mut survival = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut new_lo = usize::MAX;
        let mut new_hi = 0usize;
        for (j, &p) in prob[lo..hi].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let pos = (lo + j) as i64;
            for &(s, q) in &moves {
                let target = pos + s;
                if target < 0 {
                    continue;
                }
                let t = target as usize;
                next[t] += p * q;
                new_lo = new_lo.min(t);
                new_hi = new_hi.max(t + 1);
            }
        }
        for p in &mut prob[lo..hi] {
            *p = 0.0;
        }
        std::mem::swap(&mut prob, &mut next);
        if new_lo == usize::MAX {
            survival.push(0.0);
            lo = 0;
            hi = 0;
            continue;
        }
        while new_lo < new_hi && prob[new_lo] < PRUNE {
            prob[new_lo] = 0.0;
            new_lo += 1;
        }
        while new_hi > new_lo && prob[new_hi - 1] < PRUNE {
            prob[new_hi - 1] = 0.0;
            new_hi -= 1;
        }
        lo = new_lo;
        hi = new_hi;
        // summation order can lift a flat step by an ulp
        let alive: f64 = prob[lo..hi].iter().sum();
        survival.push(alive.min(survival.last().copied().unwrap_or(1.0)));
    }
    Ok(survival)
}

/// Largest relative gap between `|X_n|` of the full chain and the scalar
/// recursion over `n` steps on shared draws.
pub fn reduction_error(spec: &EnsembleSpec, x0: &ConePoint, n: usize, rng: &mut Stream) -> Result<f64> {
    let walk = rank_one_reduce(spec)?;
    let mut scalar_rng = rng.clone();
    let scalar = walk.simulate_radius(x0.norm(), n, &mut scalar_rng);
    let mut sampler = spec.sampler();
    let mut state = TrajectoryState::new(x0);
    let mut worst: f64 = 0.0;
    for expected in scalar {
        let (a, b) = sampler.sample_pair(rng)?;
        state.step(a, b);
        let gap = (state.radius() - expected).abs();
        if gap > 0.0 {
            worst = worst.max(gap / expected);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalComparison {
    pub a: f64,
    pub reps: usize,
    /// `P̂(τ^a > n)` for `n = 1..=n_max`.
    pub empirical: Vec<f64>,
    pub oracle: Vec<f64>,
    /// Binomial standard error at the oracle probability.
    pub stderr: Vec<f64>,
    /// Largest `|empirical − oracle| / stderr` over points with positive
    /// standard error.
    pub max_z: f64,
    /// Points with `stderr = 0` where the two still differ.
    pub exact_mismatches: usize,
    pub pass: bool,
}

/// Empirical survival of the norm stopping time against the exact
/// first-passage law of the reduced walk, at every `n ≤ n_max`.
pub fn compare_survival(spec: &EnsembleSpec, a: f64, n_max: usize, reps: usize, runner: &Runner) -> Result<SurvivalComparison> {
    let walk = rank_one_reduce(spec)?;
    let barrier = check_level(a)?;
    let oracle = first_passage_survival(&walk, barrier, n_max)?;
    let cap = n_max as u64;
    let outcomes = runner
        .map(reps, |k| stopping_time(spec, &StopMode::Norm, a, cap, &mut runner.stream(k as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    // counts[n] = paths stopped exactly at step n
    let mut counts = vec![0u64; n_max + 1];
    for o in &outcomes {
        if let Some(t) = o.time() {
            counts[t as usize] += 1;
        }
    }
    let mut alive = reps as u64;
    let mut empirical = Vec::with_capacity(n_max);
    for c in &counts[1..] {
        alive -= c;
        empirical.push(alive as f64 / reps as f64);
    }
    let stderr: Vec<f64> = oracle.iter().map(|p| (p * (1.0 - p) / reps as f64).sqrt()).collect();
    let mut max_z: f64 = 0.0;
    let mut exact_mismatches = 0;
    for ((e, o), s) in empirical.iter().zip(&oracle).zip(&stderr) {
        if *s > 0.0 {
            max_z = max_z.max((e - o).abs() / s);
        } else if (e - o).abs() > 1e-12 {
            exact_mismatches += 1;
        }
    }
    Ok(SurvivalComparison {
        a,
        reps,
        empirical,
        oracle,
        stderr,
        max_z,
        exact_mismatches,
        pass: max_z <= 3.0 && exact_mismatches == 0,
    })
}
