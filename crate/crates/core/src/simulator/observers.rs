use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::state::{ProductBundle, SignedLogVec, TrajectoryState};
use super::stopping::BARRIER_SLACK;
use crate::cone::ConePoint;
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::measure::{HistogramConfig, OccupationHistogram};
use crate::runner::{Runner, Stream};
use crate::stats;

pub const OBSERVER_NAMES: [&str; 4] = ["conservativity", "contractivity", "bernoulli", "occupation"];
pub const PREPASS_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractivityConfig {
    pub y0: ConePoint,
    /// Window `|X_n^x| ≤ K`; `None` means `10 · median |X_n|` from a pre-pass.
    pub k_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliConfig {
    /// Threshold on `|B_k| / ‖A_k‖`; `None` means the 25th percentile of a
    /// pre-pass sample.
    pub eps: Option<f64>,
    /// Steps at which the running sum is recorded; empty means powers of 10.
    pub checkpoints: Vec<u64>,
}

/// Which observers ride along a trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObserverSet {
    pub conservativity: bool,
    pub contractivity: Option<ContractivityConfig>,
    pub bernoulli: Option<BernoulliConfig>,
    pub occupation: Option<HistogramConfig>,
}

impl ObserverSet {
    /// Observers by name with default settings. The contractivity partner
    /// starts at `5·e_d`.
    pub fn from_names<S: AsRef<str>>(names: &[S], dim: usize) -> Result<Self> {
        let mut set = ObserverSet::default();
        for name in names {
            match name.as_ref() {
                "conservativity" => set.conservativity = true,
                "contractivity" => {
                    let mut y0 = vec![0.0; dim];
                    y0[dim - 1] = 5.0;
                    set.contractivity = Some(ContractivityConfig {
                        y0: ConePoint::new(y0)?,
                        k_bound: None,
                    })
                }
                "bernoulli" => {
                    set.bernoulli = Some(BernoulliConfig {
                        eps: None,
                        checkpoints: Vec::new(),
                    })
                }
                "occupation" => set.occupation = Some(HistogramConfig::default()),
                other => return Err(Error::UnknownObserver(other.to_string())),
            }
        }
        Ok(set)
    }

    /// Fills in `K` and `ε` from a pre-pass on `runner`'s streams.
    pub fn resolve(&self, spec: &EnsembleSpec, x0: &ConePoint, runner: &Runner) -> Result<Self> {
        let mut out = self.clone();
        if let Some(c) = out.contractivity.as_mut() {
            if c.k_bound.is_none() {
                c.k_bound = Some(default_k_bound(spec, x0, &mut runner.stream(0))?);
            }
        }
        if let Some(b) = out.bernoulli.as_mut() {
            if b.eps.is_none() {
                b.eps = Some(default_eps(spec, &mut runner.stream(1))?);
            }
        }
        Ok(out)
    }
}

/// `10 · median |X_n|` over a pre-pass from `x0`.
pub fn default_k_bound(spec: &EnsembleSpec, x0: &ConePoint, rng: &mut Stream) -> Result<f64> {
    let mut sampler = spec.sampler();
    let mut state = TrajectoryState::new(x0);
    let mut radii = Vec::with_capacity(PREPASS_STEPS);
    for _ in 0..PREPASS_STEPS {
        let (a, b) = sampler.sample_pair(rng)?;
        state.step(a, b);
        radii.push(state.log_radius());
    }
    Ok(10.0 * stats::median(&radii).exp())
}

/// 25th percentile of `|B| / ‖A‖` over a pre-pass sample.
pub fn default_eps(spec: &EnsembleSpec, rng: &mut Stream) -> Result<f64> {
    let mut sampler = spec.sampler();
    let mut ratios = Vec::with_capacity(PREPASS_STEPS);
    for _ in 0..PREPASS_STEPS {
        let (a, b) = sampler.sample_pair(rng)?;
        ratios.push(b.norm() / a.col_max());
    }
    Ok(stats::quantile(&ratios, 0.25))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservativityReport {
    /// `min_{1≤k≤n} |X_k|`
    pub running_min: f64,
    pub final_log_radius: f64,
    /// `Σ_{k≤n} 1{‖A_{k,1}‖ ≤ 1}`
    pub returns: u64,
    /// Projective diameter of `A_{n,1}·𝕏`.
    pub product_diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractivityReport {
    pub k_bound: f64,
    /// Number of `n` with `|X_n^x| ≤ K`.
    pub visits: u64,
    /// Median of `ln |X_n^x − X_n^y|` over the first and second half of the
    /// visits.
    pub median_first_visits: Option<f64>,
    pub median_second_visits: Option<f64>,
    /// Same, splitting at time `n/2` instead.
    pub median_first_time: Option<f64>,
    pub median_second_time: Option<f64>,
    pub final_log_difference: f64,
}

impl ContractivityReport {
    /// Second-half median strictly below the first, halves by visit count.
    pub fn decreased(&self) -> bool {
        matches!((self.median_first_visits, self.median_second_visits), (Some(a), Some(b)) if b < a)
    }

    /// Same, halves by time; `None` if a time half has no visits.
    pub fn decreased_in_time(&self) -> Option<bool> {
        match (self.median_first_time, self.median_second_time) {
            (Some(a), Some(b)) => Some(b < a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernoulliReport {
    pub eps: f64,
    /// `(n, Σ_{k≤n} ε_k η_k)`
    pub checkpoints: Vec<(u64, u64)>,
}

impl BernoulliReport {
    pub fn sum_at(&self, n: u64) -> Option<u64> {
        self.checkpoints.iter().find(|(m, _)| *m == n).map(|(_, s)| *s)
    }

    /// The sum grew between every pair of consecutive checkpoints.
    pub fn strictly_increasing(&self) -> bool {
        self.checkpoints.windows(2).all(|w| w[1].1 > w[0].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverReports {
    pub steps: u64,
    pub final_log_radius: f64,
    pub conservativity: Option<ConservativityReport>,
    pub contractivity: Option<ContractivityReport>,
    pub bernoulli: Option<BernoulliReport>,
    #[serde(skip)]
    pub occupation: Option<OccupationHistogram>,
}

/// Per-path digest of an [`ObserverStudy`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub path: usize,
    pub running_min: f64,
    pub final_log_radius: f64,
    pub returns: u64,
    pub visits: u64,
    pub contraction_decreased: bool,
    pub contraction_decreased_in_time: Option<bool>,
    pub bernoulli_sum: u64,
    pub bernoulli_increasing: bool,
}

/// Conservativity, contractivity and Bernoulli-divergence rates over many
/// independent paths from the same start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverStudy {
    pub steps: u64,
    pub paths: usize,
    pub x0_norm: f64,
    pub k_bound: f64,
    pub eps: f64,
    /// Paths whose running minimum stayed below `10 |x0|`.
    pub conservative_fraction: f64,
    /// Paths whose contraction median decreased (halves by visits).
    pub contraction_fraction: f64,
    /// Same with halves by time, among paths visiting in both halves.
    pub contraction_time_fraction: f64,
    pub bernoulli_fraction: f64,
    pub per_path: Vec<PathSummary>,
}

/// Runs all three path observers on `paths` trajectories of `n` steps.
/// Defaults for `K` and `ε` come from a pre-pass on a fork of `runner`;
/// path `k` uses stream `k`.
pub fn observer_study(
    spec: &EnsembleSpec,
    x0: &ConePoint,
    y0: &ConePoint,
    n: u64,
    paths: usize,
    runner: &Runner,
) -> Result<ObserverStudy> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let set = ObserverSet {
        conservativity: true,
        contractivity: Some(ContractivityConfig {
            y0: y0.clone(),
            k_bound: None,
        }),
        bernoulli: Some(BernoulliConfig {
            eps: None,
            checkpoints: Vec::new(),
        }),
        occupation: None,
    }
    .resolve(spec, x0, &runner.fork("prepass"))?;
    let reports = runner
        .map(paths, |k| run_trajectory(spec, x0, n, &set, &mut runner.stream(k as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let bound = 10.0 * x0.norm();
    let per_path: Vec<PathSummary> = reports
        .iter()
        .enumerate()
        .map(|(path, r)| {
            let cons = r.conservativity.as_ref().expect("requested");
            let contr = r.contractivity.as_ref().expect("requested");
            let bern = r.bernoulli.as_ref().expect("requested");
            PathSummary {
                path,
                running_min: cons.running_min,
                final_log_radius: r.final_log_radius,
                returns: cons.returns,
                visits: contr.visits,
                contraction_decreased: contr.decreased(),
                contraction_decreased_in_time: contr.decreased_in_time(),
                bernoulli_sum: bern.checkpoints.last().map_or(0, |c| c.1),
                bernoulli_increasing: bern.strictly_increasing(),
            }
        })
        .collect();
    let frac = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let timed: Vec<bool> = per_path.iter().filter_map(|p| p.contraction_decreased_in_time).collect();
    Ok(ObserverStudy {
        steps: n,
        paths,
        x0_norm: x0.norm(),
        k_bound: set.contractivity.as_ref().and_then(|c| c.k_bound).expect("resolved"),
        eps: set.bernoulli.as_ref().and_then(|b| b.eps).expect("resolved"),
        conservative_fraction: frac(per_path.iter().filter(|p| p.running_min < bound).count(), paths),
        contraction_fraction: frac(per_path.iter().filter(|p| p.contraction_decreased).count(), paths),
        contraction_time_fraction: frac(timed.iter().filter(|&&d| d).count(), timed.len()),
        bernoulli_fraction: frac(per_path.iter().filter(|p| p.bernoulli_increasing).count(), paths),
        per_path,
    })
}

fn median_of(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(stats::median(xs))
    }
}

fn decades(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 10u64;
    while p < n {
        out.push(p);
        p = p.saturating_mul(10);
    }
    out.push(n);
    out
}

/// Runs `n` steps of `X_{k+1} = A_{k+1} X_k + B_{k+1}` from `x0`, feeding
/// the requested observers. Unset `K`/`ε` defaults are drawn from a
/// pre-pass seeded off `rng`.
pub fn run_trajectory(
    spec: &EnsembleSpec,
    x0: &ConePoint,
    n: u64,
    observers: &ObserverSet,
    rng: &mut Stream,
) -> Result<ObserverReports> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    if x0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x0.dim(),
        });
    }
    let needs_prepass = observers.contractivity.as_ref().is_some_and(|c| c.k_bound.is_none())
        || observers.bernoulli.as_ref().is_some_and(|b| b.eps.is_none());
    let observers = if needs_prepass {
        let mut pre = Stream::seed_from_u64(rng.gen());
        let mut set = observers.clone();
        if let Some(c) = set.contractivity.as_mut() {
            if c.k_bound.is_none() {
                c.k_bound = Some(default_k_bound(spec, x0, &mut pre)?);
            }
        }
        if let Some(b) = set.bernoulli.as_mut() {
            if b.eps.is_none() {
                b.eps = Some(default_eps(spec, &mut pre)?);
            }
        }
        std::borrow::Cow::Owned(set)
    } else {
        std::borrow::Cow::Borrowed(observers)
    };

    let d = spec.dim();
    let mut sampler = spec.sampler();
    let mut state = TrajectoryState::new(x0);
    let track_product = observers.conservativity || observers.bernoulli.is_some();
    let mut product = track_product.then(|| ProductBundle::identity(d).tracking_diameter());

    let mut running_min = f64::INFINITY;
    let mut returns = 0u64;

    let contract = observers.contractivity.as_ref();
    let mut difference = match contract {
        Some(c) => {
            if c.y0.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.y0.dim(),
                });
            }
            let diff: Vec<f64> = x0.coords().iter().zip(c.y0.coords()).map(|(x, y)| x - y).collect();
            Some(SignedLogVec::new(&diff)?)
        }
        None => None,
    };
    let log_k = contract.map(|c| c.k_bound.expect("resolved").ln());
    let mut visit_log_diffs: Vec<f64> = Vec::new();
    let mut visits_in_first_time_half = 0usize;
    let half_time = n / 2;

    let bern = observers.bernoulli.as_ref();
    let eps = bern.map(|b| b.eps.expect("resolved"));
    let checkpoints = bern
        .map(|b| {
            let mut c = if b.checkpoints.is_empty() { decades(n) } else { b.checkpoints.clone() };
            c.retain(|&m| m >= 1 && m <= n);
            c.sort_unstable();
            c.dedup();
            c
        })
        .unwrap_or_default();
    let mut checkpoint_values = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0usize;
    let mut bern_sum = 0u64;
    // η_k looks at A_{k−1,1}; A_{0,1} is the identity
    let mut prev_product_small = true;

    let mut hist = observers
        .occupation
        .as_ref()
        .map(|c| OccupationHistogram::new(c.clone(), d, n))
        .transpose()?;

    for k in 1..=n {
        let (a, b) = sampler.sample_pair(rng)?;
        if let Some(e) = eps {
            if prev_product_small && b.norm() >= e * a.col_max() {
                bern_sum += 1;
            }
        }
        state.step(a, b);
        if let Some(p) = product.as_mut() {
            p.step(a);
            let small = p.log_norm() <= BARRIER_SLACK;
            if small {
                returns += 1;
            }
            prev_product_small = small;
        }
        running_min = running_min.min(state.log_radius());
        if let Some(diff) = difference.as_mut() {
            diff.step(a);
            if state.log_radius() <= log_k.expect("set with difference") {
                visit_log_diffs.push(diff.log_norm());
                if k <= half_time {
                    visits_in_first_time_half += 1;
                }
            }
        }
        if let Some(h) = hist.as_mut() {
            h.record(k - 1, state.log_radius(), state.direction());
        }
        if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == k {
            checkpoint_values.push((k, bern_sum));
            next_checkpoint += 1;
        }
    }

    let conservativity = observers.conservativity.then(|| ConservativityReport {
        running_min: running_min.exp(),
        final_log_radius: state.log_radius(),
        returns,
        product_diameter: product.as_ref().map_or(f64::NAN, ProductBundle::diameter),
    });
    let contractivity = match (contract, difference) {
        (Some(c), Some(diff)) => {
            let visits = visit_log_diffs.len();
            let half = visits / 2;
            let (first_time, second_time) = {
                let (a, b) = visit_log_diffs.split_at(visits_in_first_time_half);
                (median_of(&mut a.to_vec()), median_of(&mut b.to_vec()))
            };
            let (first, second) = visit_log_diffs.split_at_mut(half);
            Some(ContractivityReport {
                k_bound: c.k_bound.expect("resolved"),
                visits: visits as u64,
                median_first_visits: if visits >= 2 { median_of(first) } else { None },
                median_second_visits: if visits >= 2 { median_of(second) } else { None },
                median_first_time: first_time,
                median_second_time: second_time,
                final_log_difference: diff.log_norm(),
            })
        }
        _ => None,
    };
    let bernoulli = eps.map(|eps| BernoulliReport {
        eps,
        checkpoints: checkpoint_values,
    });
    Ok(ObserverReports {
        steps: n,
        final_log_radius: state.log_radius(),
        conservativity,
        contractivity,
        bernoulli,
        occupation: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> EnsembleSpec {
        EnsembleSpec::from_json(json).unwrap()
    }

    fn mixture() -> EnsembleSpec {
        spec(
            r#"{"dim": 2, "delta": 1, "atoms": [
                {"weight": 0.5, "A": [[1,1],[1,1]], "B": [1,1]},
                {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,1]}]}"#,
        )
    }

    #[test]
    fn subcritical_running_min_halves_every_step() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [0,0]}]}"#);
        let set = ObserverSet::from_names(&["conservativity"], 2).unwrap();
        let r = run_trajectory(&s, &ConePoint::basis(2, 0).unwrap(), 30, &set, &mut Runner::new(0).stream(0)).unwrap();
        let c = r.conservativity.unwrap();
        assert!((c.running_min - 2f64.powi(-30)).abs() < 1e-12 * 2f64.powi(-30));
        assert_eq!(c.returns, 30);
    }

    #[test]
    fn equal_starts_have_zero_difference() {
        let x0 = ConePoint::new(vec![1.0, 0.0]).unwrap();
        let set = ObserverSet {
            contractivity: Some(ContractivityConfig {
                y0: x0.clone(),
                k_bound: Some(1e300),
            }),
            ..Default::default()
        };
        let r = run_trajectory(&mixture(), &x0, 1000, &set, &mut Runner::new(1).stream(0)).unwrap();
        let c = r.contractivity.unwrap();
        assert_eq!(c.final_log_difference, f64::NEG_INFINITY);
        assert_eq!(c.median_second_visits, Some(f64::NEG_INFINITY));
        assert_eq!(c.visits, 1000);
    }

    #[test]
    fn returns_grow_on_the_critical_mixture() {
        let set = ObserverSet::from_names(&["conservativity", "bernoulli"], 2).unwrap();
        let x0 = ConePoint::basis(2, 0).unwrap();
        let r = run_trajectory(&mixture(), &x0, 1_000_000, &set, &mut Runner::new(2).stream(0)).unwrap();
        let c = r.conservativity.unwrap();
        assert!(c.returns > 100, "{}", c.returns);
        assert!(c.running_min < 10.0);
        let b = r.bernoulli.unwrap();
        assert_eq!(b.eps, 1.0);
        assert_eq!(b.checkpoints.last().unwrap().0, 1_000_000);
        assert_eq!(b.checkpoints.len(), 6);
    }

    #[test]
    fn unknown_observer_is_rejected() {
        assert!(matches!(
            ObserverSet::from_names(&["conservativity", "telepathy"], 2),
            Err(Error::UnknownObserver(name)) if name == "telepathy"
        ));
    }

    #[test]
    fn resolved_defaults_are_reproducible() {
        let set = ObserverSet::from_names(&["contractivity", "bernoulli"], 2).unwrap();
        let x0 = ConePoint::basis(2, 0).unwrap();
        let a = set.resolve(&mixture(), &x0, &Runner::new(5)).unwrap();
        let b = set.resolve(&mixture(), &x0, &Runner::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.contractivity.unwrap().k_bound.unwrap() > 0.0);
    }

    #[test]
    fn study_on_the_rank_one_mixture() {
        let s = mixture();
        let x0 = ConePoint::basis(2, 0).unwrap();
        let y0 = ConePoint::new(vec![0.0, 5.0]).unwrap();
        let st = observer_study(&s, &x0, &y0, 100_000, 200, &Runner::new(9)).unwrap();
        assert_eq!(st.per_path.len(), 200);
        assert_eq!(st.eps, 1.0, "{st:?}");
        assert!(st.conservative_fraction > 0.9, "{st:?}");
        assert!(st.contraction_fraction > 0.5, "{} {} {}", st.contraction_fraction, st.contraction_time_fraction, st.bernoulli_fraction);
    }
}
