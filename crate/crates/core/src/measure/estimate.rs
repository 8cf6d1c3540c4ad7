use serde::Serialize;

use super::histogram::{HistogramConfig, OccupationHistogram};
use crate::cone::ConePoint;
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::runner::Runner;
use crate::simulator::{run_trajectory, ObserverSet};

pub const MIN_MEASURE_STEPS: u64 = 100_000;
/// Radii compared by the uniqueness check: `[1/8, 8]`.
pub const UNIQUENESS_WINDOW: (f64, f64) = (0.125, 8.0);
pub const UNIQUENESS_TV: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOptions {
    pub histogram: HistogramConfig,
    /// Independent chains per estimate, each of `n_steps` steps, merged.
    pub chains: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            histogram: HistogramConfig::default(),
            chains: 1,
        }
    }
}

/// Occupation histogram of the chain from `x0`, normalized by the
/// reference window. Chain `c` uses stream `c` of `runner`.
pub fn estimate_invariant_measure(
    spec: &EnsembleSpec,
    x0: &ConePoint,
    n_steps: u64,
    options: &MeasureOptions,
    runner: &Runner,
) -> Result<OccupationHistogram> {
    if n_steps < MIN_MEASURE_STEPS {
        return Err(Error::InvalidArgument(format!(
            "invariant-measure estimates need at least {MIN_MEASURE_STEPS} steps, got {n_steps}"
        )));
    }
    if options.chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    let observers = ObserverSet {
        occupation: Some(options.histogram.clone()),
        ..Default::default()
    };
    let runs = runner.map(options.chains, |c| {
        run_trajectory(spec, x0, n_steps, &observers, &mut runner.stream(c as u64))
    });
    let mut merged: Option<OccupationHistogram> = None;
    for run in runs {
        let hist = run?.occupation.expect("occupation observer requested");
        match merged.as_mut() {
            Some(m) => m.merge(&hist)?,
            None => merged = Some(hist),
        }
    }
    let merged = merged.expect("at least one chain");
    if merged.ref_count() == 0 {
        return Err(Error::ReferenceStarved);
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Pairwise total-variation distances over the common window.
    pub tv_matrix: Vec<Vec<f64>>,
    pub max_tv: f64,
    pub pass: bool,
}

/// Total variation between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Runs one estimate per `(x0, runner)` pair and compares the histograms
/// restricted to radii in `[1/8, 8]`. Passes iff every pairwise distance
/// is at most 0.1.
pub fn uniqueness_check(
    spec: &EnsembleSpec,
    runs: &[(ConePoint, Runner)],
    n_steps: u64,
    options: &MeasureOptions,
) -> Result<UniquenessReport> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument("uniqueness check needs at least two runs".into()));
    }
    let (lo, hi) = (UNIQUENESS_WINDOW.0.ln(), UNIQUENESS_WINDOW.1.ln());
    let mut dists = Vec::with_capacity(runs.len());
    for (x0, runner) in runs {
        let h = estimate_invariant_measure(spec, x0, n_steps, options, runner)?;
        dists.push(h.window_distribution(lo, hi)?);
    }
    Ok(compare(&dists))
}

pub(crate) fn compare(dists: &[Vec<f64>]) -> UniquenessReport {
    let k = dists.len();
    let mut tv_matrix = vec![vec![0.0; k]; k];
    let mut max_tv: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let tv = total_variation(&dists[i], &dists[j]);
            tv_matrix[i][j] = tv;
            tv_matrix[j][i] = tv;
            max_tv = max_tv.max(tv);
        }
    }
    UniquenessReport {
        tv_matrix,
        max_tv,
        pass: max_tv <= UNIQUENESS_TV,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> EnsembleSpec {
        EnsembleSpec::from_json(json).unwrap()
    }

    #[test]
    fn rejects_short_runs() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [0.5,0.5]}]}"#);
        let x0 = ConePoint::basis(2, 0).unwrap();
        assert!(estimate_invariant_measure(&s, &x0, 0, &MeasureOptions::default(), &Runner::new(0)).is_err());
    }

    #[test]
    fn fixed_point_inside_the_window_holds_all_mass() {
        // |X| ↦ |X|/2 + 0.8 has fixed point |x| = 1.6
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [0.4,0.4]}]}"#);
        let x0 = ConePoint::new(vec![1.0, 0.9]).unwrap();
        let h = estimate_invariant_measure(&s, &x0, MIN_MEASURE_STEPS, &MeasureOptions::default(), &Runner::new(0)).unwrap();
        assert_eq!(h.ref_count(), MIN_MEASURE_STEPS);
        assert_eq!(h.ref_window_mass(), 1.0);
    }

    #[test]
    fn transient_to_zero_starves_the_window() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[0.25,0.25],[0.25,0.25]], "B": [0,0]}]}"#);
        let x0 = ConePoint::new(vec![0.1, 0.0]).unwrap();
        let runs = vec![(x0.clone(), Runner::new(1)), (x0, Runner::new(2))];
        assert!(matches!(
            uniqueness_check(&s, &runs, MIN_MEASURE_STEPS, &MeasureOptions::default()),
            Err(Error::ReferenceStarved)
        ));
    }

    #[test]
    fn identical_runs_have_zero_distance() {
        let s = spec(
            r#"{"dim": 2, "delta": 1, "atoms": [
                {"weight": 0.5, "A": [[1,1],[1,1]], "B": [0.25,0.25]},
                {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [0.25,0.25]}]}"#,
        );
        let x0 = ConePoint::basis(2, 0).unwrap();
        let runs = vec![(x0.clone(), Runner::new(3)), (x0, Runner::new(3))];
        let r = uniqueness_check(&s, &runs, MIN_MEASURE_STEPS, &MeasureOptions::default()).unwrap();
        assert_eq!(r.max_tv, 0.0);
        assert!(r.pass);
    }
}
