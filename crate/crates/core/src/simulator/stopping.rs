use serde::Serialize;

use super::state::{ProductBundle, SignedLogVec};
use crate::cone::ConePoint;
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::runner::Stream;

/// Slack on the log-scale barrier test. Log norms are accumulated with
/// compensated sums, so lattice walks that land on the barrier are off by
/// a few ulps at most.
pub const BARRIER_SLACK: f64 = 1e-12;
pub const DEFAULT_STOPPING_CAP: u64 = 10_000_000;

/// Which product is compared with `1/a`.
#[derive(Debug, Clone, PartialEq)]
pub enum StopMode {
    /// `a |A_{n,1} x| ≤ 1`
    Vector(ConePoint),
    /// `a ‖A_{n,1}‖ ≤ 1`
    Norm,
}

impl StopMode {
    pub fn name(&self) -> &'static str {
        match self {
            StopMode::Vector(_) => "vector",
            StopMode::Norm => "norm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopOutcome {
    Stopped(u64),
    /// The cap was reached first.
    Exceeded(u64),
}

impl StopOutcome {
    pub fn time(self) -> Option<u64> {
        match self {
            StopOutcome::Stopped(n) => Some(n),
            StopOutcome::Exceeded(_) => None,
        }
    }

    /// `τ > n`, counting censored paths as surviving up to the cap.
    pub fn survives(self, n: u64) -> bool {
        match self {
            StopOutcome::Stopped(t) => t > n,
            StopOutcome::Exceeded(_) => true,
        }
    }
}

pub(crate) fn check_level(a: f64) -> Result<f64> {
    if !(a >= 1.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("a must be a finite number >= 1, got {a}")));
    }
    Ok(-a.ln() + BARRIER_SLACK)
}

fn check_cap(cap: u64) -> Result<()> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    Ok(())
}

/// First `n ≥ 1` at which the product, in the given mode, is at most `1/a`.
pub fn stopping_time(spec: &EnsembleSpec, mode: &StopMode, a: f64, cap: u64, rng: &mut Stream) -> Result<StopOutcome> {
    let barrier = check_level(a)?;
    check_cap(cap)?;
    let mut sampler = spec.sampler();
    match mode {
        StopMode::Norm => {
            let mut product = ProductBundle::identity(spec.dim());
            for n in 1..=cap {
                product.step(sampler.sample_pair(rng)?.0);
                if product.log_norm() <= barrier {
                    return Ok(StopOutcome::Stopped(n));
                }
            }
        }
        StopMode::Vector(x) => {
            check_start(spec, x)?;
            let mut v = SignedLogVec::new(x.coords())?;
            for n in 1..=cap {
                v.step(sampler.sample_pair(rng)?.0);
                if v.log_norm() <= barrier {
                    return Ok(StopOutcome::Stopped(n));
                }
            }
        }
    }
    Ok(StopOutcome::Exceeded(cap))
}

fn check_start(spec: &EnsembleSpec, x: &ConePoint) -> Result<()> {
    if x.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x.dim(),
        });
    }
    Ok(())
}

/// `(τ^{x,a}, τ^a)` on one shared path of draws. With `|x| ≤ 1` the first
/// never exceeds the second.
pub fn paired_stopping_times(
    spec: &EnsembleSpec,
    x: &ConePoint,
    a: f64,
    cap: u64,
    rng: &mut Stream,
) -> Result<(StopOutcome, StopOutcome)> {
    let barrier = check_level(a)?;
    check_cap(cap)?;
    check_start(spec, x)?;
    if x.norm() > 1.0 + BARRIER_SLACK {
        return Err(Error::InvalidArgument(format!("paired stopping times need |x| <= 1, got {}", x.norm())));
    }
    let mut sampler = spec.sampler();
    let mut product = ProductBundle::identity(spec.dim());
    let mut v = SignedLogVec::new(x.coords())?;
    let mut vector_time = None;
    for n in 1..=cap {
        let m = sampler.sample_pair(rng)?.0;
        product.step(m);
        if vector_time.is_none() {
            v.step(m);
            if v.log_norm() <= barrier {
                vector_time = Some(n);
            }
        }
        if product.log_norm() <= barrier {
            let vector = StopOutcome::Stopped(vector_time.unwrap_or(n));
            return Ok((vector, StopOutcome::Stopped(n)));
        }
    }
    let vector = vector_time.map_or(StopOutcome::Exceeded(cap), StopOutcome::Stopped);
    Ok((vector, StopOutcome::Exceeded(cap)))
}
