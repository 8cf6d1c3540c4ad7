use serde::Serialize;

use super::spec::{EnsembleSpec, Law};
use crate::error::{Error, Result};
use crate::runner::Runner;
use crate::stats;

/// `z` for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

pub const DEFAULT_TARGET_TOL: f64 = 1e-3;
const CALIBRATION_STEPS: usize = 1_000;
const PILOT_REPS: usize = 32;
const MAX_CALIBRATION_REPS: usize = 200_000;
const MAX_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub gamma_hat: f64,
    /// Half-width of the 95% interval from the across-replicate spread;
    /// infinite with a single replicate.
    pub ci_half_width: f64,
    /// Standard deviation of the per-replicate averages.
    pub rep_sd: f64,
    pub steps: usize,
    pub reps: usize,
}

/// Average growth `(1/n) Σ ρ(A_k, ξ_{k−1})` along the projective chain
/// `ξ_k = A_k·ξ_{k−1}`, started from the barycenter, averaged over `reps`
/// independent streams.
pub fn estimate_lyapunov(
    spec: &EnsembleSpec,
    steps: usize,
    reps: usize,
    runner: &Runner,
) -> Result<LyapunovEstimate> {
    if steps == 0 || reps == 0 {
        return Err(Error::InvalidArgument(format!(
            "steps and reps must be positive (got {steps}, {reps})"
        )));
    }
    let d = spec.dim();
    let per_rep = runner.map(reps, |rep| -> Result<f64> {
        let mut rng = runner.stream(rep as u64);
        let mut sampler = spec.sampler();
        let mut xi = vec![1.0 / d as f64; d];
        let mut image = vec![0.0; d];
        let mut sum = 0.0;
        for _ in 0..steps {
            let (a, _) = sampler.sample_pair(&mut rng)?;
            a.apply_into(&xi, &mut image);
            let norm: f64 = image.iter().sum();
            sum += norm.ln();
            for (x, y) in xi.iter_mut().zip(&image) {
                *x = y / norm;
            }
        }
        Ok(sum / steps as f64)
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let gamma_hat = stats::mean(&per_rep);
    let rep_sd = stats::variance(&per_rep).sqrt();
    let ci_half_width = if reps > 1 {
        Z95 * rep_sd / (reps as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(LyapunovEstimate {
        gamma_hat,
        ci_half_width,
        rep_sd,
        steps,
        reps,
    })
}

/// Share of the matrix law with `v(A) ≥ 1 + δ`: exact for atoms, sampled
/// otherwise.
pub fn expanding_fraction(spec: &EnsembleSpec, samples: usize, runner: &Runner) -> Result<f64> {
    let threshold = 1.0 + spec.delta();
    match spec.law() {
        Law::Atoms(_) => Ok(spec
            .scaled_atoms()
            .expect("atom law")
            .iter()
            .filter(|atom| atom.a.col_min() >= threshold)
            .map(|atom| atom.weight)
            .sum()),
        Law::Generator(_) => {
            let mut rng = runner.stream(0);
            let mut sampler = spec.sampler();
            let mut hits = 0usize;
            for _ in 0..samples {
                if sampler.sample_pair(&mut rng)?.0.col_min() >= threshold {
                    hits += 1;
                }
            }
            Ok(hits as f64 / samples.max(1) as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    #[serde(skip)]
    pub spec: EnsembleSpec,
    /// Product of all scale corrections applied.
    pub multiplier: f64,
    /// Estimate on the returned spec from a stream not used for fitting.
    pub check: LyapunovEstimate,
    pub rounds: usize,
    pub a5_fraction: f64,
    pub a5_pass: bool,
}

/// Rescales the matrix law so that its Lyapunov exponent vanishes.
///
/// Uses `γ(c·μ̄) = ln c + γ(μ̄)`: each round multiplies the scale by
/// `exp(−γ̂)`, then re-estimates on a fresh stream. Replicate counts are
/// sized from a pilot run so the interval half-width is about a third of
/// `target_tol`.
pub fn calibrate_critical(spec: &EnsembleSpec, target_tol: f64, runner: &Runner) -> Result<Calibration> {
    if !(target_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("target_tol must be positive, got {target_tol}")));
    }
    let pilot = estimate_lyapunov(spec, CALIBRATION_STEPS, PILOT_REPS, &runner.fork("calibrate/pilot"))?;
    let needed = (3.0 * Z95 * pilot.rep_sd / target_tol).powi(2).ceil();
    let reps = (needed as usize).clamp(PILOT_REPS, MAX_CALIBRATION_REPS);

    let mut current = spec.clone();
    let mut multiplier = 1.0;
    let mut estimate = estimate_lyapunov(&current, CALIBRATION_STEPS, reps, &runner.fork("calibrate/fit/1"))?;
    for round in 1..=MAX_ROUNDS {
        let factor = (-estimate.gamma_hat).exp();
        multiplier *= factor;
        current = current.scaled_by(factor)?;
        let check = estimate_lyapunov(
            &current,
            CALIBRATION_STEPS,
            reps,
            &runner.fork(&format!("calibrate/check/{round}")),
        )?;
        if check.gamma_hat.abs() <= target_tol {
            let a5_fraction = expanding_fraction(&current, 10_000, &runner.fork("calibrate/a5"))?;
            return Ok(Calibration {
                spec: current,
                multiplier,
                check,
                rounds: round,
                a5_fraction,
                a5_pass: a5_fraction > 0.0,
            });
        }
        estimate = check;
    }
    Err(Error::CalibrationFailed {
        tol: target_tol,
        rounds: MAX_ROUNDS,
        gamma_hat: estimate.gamma_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{ConeMatrix, ConePoint};

    fn atom_spec(entries: &[(f64, f64)]) -> EnsembleSpec {
        // (weight, constant entry) atoms in d = 2
        let atoms = entries
            .iter()
            .map(|&(w, c)| {
                format!(r#"{{"weight": {w}, "A": [[{c},{c}],[{c},{c}]], "B": [1,1]}}"#)
            })
            .collect::<Vec<_>>()
            .join(",");
        EnsembleSpec::from_json(&format!(r#"{{"dim": 2, "delta": 1, "atoms": [{atoms}]}}"#)).unwrap()
    }

    #[test]
    fn column_stochastic_atom_has_zero_exponent() {
        let est = estimate_lyapunov(&atom_spec(&[(1.0, 0.5)]), 100, 4, &Runner::new(1)).unwrap();
        assert_eq!(est.gamma_hat, 0.0);
        assert_eq!(est.ci_half_width, 0.0);
    }

    #[test]
    fn all_ones_atom_grows_at_ln2() {
        let est = estimate_lyapunov(&atom_spec(&[(1.0, 1.0)]), 1000, 3, &Runner::new(2)).unwrap();
        assert!((est.gamma_hat - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scaling_shifts_the_exponent_by_log_of_scale() {
        let spec = EnsembleSpec::from_json(
            r#"{"dim": 3, "delta": 0.5,
                "generator": {"entry_log10_range": [-1, 1], "b_log10_range": [0, 0]}}"#,
        )
        .unwrap();
        let r = Runner::new(5);
        let base = estimate_lyapunov(&spec, 200, 8, &r).unwrap();
        let scaled = estimate_lyapunov(&spec.scaled_by(0.3).unwrap(), 200, 8, &r).unwrap();
        assert!((scaled.gamma_hat - base.gamma_hat - 0.3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn estimate_is_deterministic_and_worker_independent() {
        let spec = atom_spec(&[(0.5, 1.0), (0.5, 0.25)]);
        let a = estimate_lyapunov(&spec, 500, 16, &Runner::new(9)).unwrap();
        let b = estimate_lyapunov(&spec, 500, 16, &Runner::new(9).with_workers(4)).unwrap();
        assert_eq!(a.gamma_hat.to_bits(), b.gamma_hat.to_bits());
    }

    #[test]
    fn rejects_nonpositive_sizes() {
        let spec = atom_spec(&[(1.0, 1.0)]);
        assert!(estimate_lyapunov(&spec, 0, 1, &Runner::new(0)).is_err());
        assert!(estimate_lyapunov(&spec, 10, 0, &Runner::new(0)).is_err());
    }

    #[test]
    fn calibrating_a_rank_one_atom() {
        let cal = calibrate_critical(&atom_spec(&[(1.0, 2.0)]), DEFAULT_TARGET_TOL, &Runner::new(3)).unwrap();
        assert!((cal.multiplier - 0.25).abs() < 1e-12);
        let a = &cal.spec.scaled_atoms().unwrap()[0].a;
        assert!(a.entries().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(cal.check.gamma_hat.abs() < 1e-12);
    }

    #[test]
    fn calibrating_an_already_critical_mixture_changes_little() {
        let spec = atom_spec(&[(0.5, 1.0), (0.5, 0.25)]);
        let tol = DEFAULT_TARGET_TOL;
        let cal = calibrate_critical(&spec, tol, &Runner::new(4)).unwrap();
        assert!(cal.multiplier.ln().abs() <= tol, "{}", cal.multiplier);
    }

    #[test]
    fn calibrated_generator_law_passes_an_independent_check() {
        let spec = EnsembleSpec::from_json(
            r#"{"dim": 2, "delta": 0.5,
                "generator": {"entry_log10_range": [-1, 1], "b_log10_range": [0, 0]}}"#,
        )
        .unwrap();
        let tol = 5e-3;
        let cal = calibrate_critical(&spec, tol, &Runner::new(8)).unwrap();
        let fresh = estimate_lyapunov(&cal.spec, 1000, 2000, &Runner::new(1234)).unwrap();
        assert!(fresh.gamma_hat.abs() <= tol + 3.0 * fresh.ci_half_width, "{fresh:?}");
    }

    #[test]
    fn dirac_and_zero_b_are_accepted() {
        let spec = EnsembleSpec::dirac(ConeMatrix::ones(2).unwrap(), ConePoint::zero(2).unwrap()).unwrap();
        assert_eq!(expanding_fraction(&spec, 10, &Runner::new(0)).unwrap(), 1.0);
    }
}
