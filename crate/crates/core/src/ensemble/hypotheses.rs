use serde::Serialize;

use super::lyapunov::{estimate_lyapunov, expanding_fraction, LyapunovEstimate};
use super::spec::{EnsembleSpec, Law};
use crate::cone::{ConeMatrix, REL_TOL};
use crate::error::{Error, Result};
use crate::runner::Runner;
use crate::stats;

/// Longest product examined by the A2 heuristic.
pub const A2_MAX_PRODUCT: usize = 50;
const A2_PRODUCTS: usize = 256;
const A2_SIDE_TOL: f64 = 1e-9;
/// `|γ̂|` allowed (on top of the interval half-width) for A4 to pass.
pub const A4_TOL: f64 = 1e-3;
const A4_STEPS: usize = 1_000;

pub const A2_CAVEAT: &str = "A2 is read through its operative consequence: products with \
spectral radius above and below 1. Taken literally the hypothesis is violated by {0} for \
every linear law, so no exact check is attempted.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum A2Verdict {
    Pass,
    DegenerateSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// Sample mean of `(ln 𝔫(A))^{2+δ}`; finite samples cannot certify A1.
    pub a1_sample_moment: f64,
    /// Hill estimate over the top 1% of `ln 𝔫(A)`; advisory.
    pub a1_tail_index: Option<f64>,
    pub a2_heuristic: A2Verdict,
    pub a2_min_spectral_radius: f64,
    pub a2_max_spectral_radius: f64,
    pub a2_caveat: &'static str,
    pub a3_pass: bool,
    /// Smallest `δ*(A)` seen (exact over atoms).
    pub a3_min_margin: f64,
    pub a4: LyapunovEstimate,
    pub a4_pass: bool,
    pub a5_pass: bool,
    /// Mass of `{v(A) ≥ 1 + δ}`.
    pub a5_witness_probability: f64,
    pub b_nonzero_prob: f64,
    /// Sample mean of `(ln⁺|B|)^{2+δ}`.
    pub b_log_moment: f64,
    pub b_pass: bool,
}

impl HypothesisReport {
    /// Everything that can fail outright did not.
    pub fn all_pass(&self) -> bool {
        self.a3_pass
            && self.a4_pass
            && self.a5_pass
            && self.b_pass
            && self.a1_sample_moment.is_finite()
            && self.a2_heuristic != A2Verdict::DegenerateSuspected
    }
}

fn mat_mul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik != 0.0 {
                for j in 0..d {
                    out[i * d + j] += aik * b[k * d + j];
                }
            }
        }
    }
    out
}

fn col_max(d: usize, m: &[f64]) -> f64 {
    (0..d)
        .map(|j| (0..d).map(|i| m[i * d + j]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `ln ρ(M)` for a nonnegative row-major matrix, from
/// `ρ = lim ‖M^{2^k}‖^{2^{−k}}` with renormalization at every squaring.
pub fn log_spectral_radius(d: usize, entries: &[f64]) -> f64 {
    let norm = col_max(d, entries);
    if norm == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut m: Vec<f64> = entries.iter().map(|v| v / norm).collect();
    let mut log_rho = norm.ln();
    let mut weight = 1.0;
    for _ in 0..64 {
        m = mat_mul(d, &m, &m);
        let c = col_max(d, &m);
        if c == 0.0 {
            return f64::NEG_INFINITY;
        }
        m.iter_mut().for_each(|v| *v /= c);
        weight *= 0.5;
        let increment = weight * c.ln();
        log_rho += increment;
        if increment.abs() < 1e-17 {
            break;
        }
    }
    log_rho
}

pub fn spectral_radius(a: &ConeMatrix) -> f64 {
    log_spectral_radius(a.dim(), a.entries()).exp()
}

/// Samples products of length `1..=N` and reports spectral radii on both
/// sides of 1.
fn a2_heuristic(spec: &EnsembleSpec, runner: &Runner) -> Result<(A2Verdict, f64, f64)> {
    let d = spec.dim();
    let radii = runner.map(A2_PRODUCTS, |k| -> Result<f64> {
        let mut rng = runner.stream(k as u64);
        let mut sampler = spec.sampler();
        let len = 1 + k % A2_MAX_PRODUCT;
        let mut product: Vec<f64> = sampler.sample_pair(&mut rng)?.0.entries().to_vec();
        let mut log_scale = 0.0;
        for _ in 1..len {
            let (a, _) = sampler.sample_pair(&mut rng)?;
            product = mat_mul(d, a.entries(), &product);
            let c = col_max(d, &product);
            product.iter_mut().for_each(|v| *v /= c);
            log_scale += c.ln();
        }
        Ok((log_scale + log_spectral_radius(d, &product)) / len as f64)
    });
    // per-factor log radius keeps very long products comparable
    let radii = radii.into_iter().collect::<Result<Vec<_>>>()?;
    let min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let max = radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max > A2_SIDE_TOL && min < -A2_SIDE_TOL {
        A2Verdict::Pass
    } else if max - min <= A2_SIDE_TOL && min.abs() <= A2_SIDE_TOL {
        A2Verdict::DegenerateSuspected
    } else {
        A2Verdict::Inconclusive
    };
    Ok((verdict, min.exp(), max.exp()))
}

pub fn check_hypotheses(spec: &EnsembleSpec, samples: usize, runner: &Runner) -> Result<HypothesisReport> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 samples, got {samples}")));
    }
    let p = 2.0 + spec.delta();

    let mut rng = runner.fork("hypotheses/samples").stream(0);
    let mut sampler = spec.sampler();
    let mut log_frak_n = Vec::with_capacity(samples);
    let mut b_moment = 0.0;
    let mut b_nonzero = 0usize;
    let mut sampled_margin = f64::INFINITY;
    for _ in 0..samples {
        let (a, b) = sampler.sample_pair(&mut rng)?;
        log_frak_n.push(a.norms().frak_n.ln());
        sampled_margin = sampled_margin.min(a.s_delta_margin());
        let norm_b = b.norm();
        if norm_b > 0.0 {
            b_nonzero += 1;
        }
        b_moment += norm_b.ln().max(0.0).powf(p);
    }
    let a1_sample_moment = stats::mean(&log_frak_n.iter().map(|x| x.powf(p)).collect::<Vec<_>>());
    let a1_tail_index = stats::hill(&log_frak_n, (samples / 100).max(1));

    let (a3_min_margin, b_nonzero_prob, b_log_moment) = match spec.law() {
        Law::Atoms(atoms) => {
            let margin = atoms.iter().map(|a| a.a.s_delta_margin()).fold(f64::INFINITY, f64::min);
            let nonzero = atoms.iter().filter(|a| !a.b.is_zero()).map(|a| a.weight).sum();
            let moment = atoms
                .iter()
                .map(|a| a.weight * a.b.norm().ln().max(0.0).powf(p))
                .sum();
            (margin, nonzero, moment)
        }
        Law::Generator(_) => (
            sampled_margin,
            b_nonzero as f64 / samples as f64,
            b_moment / samples as f64,
        ),
    };
    let a3_pass = a3_min_margin >= spec.delta() * (1.0 - REL_TOL);

    let a4 = estimate_lyapunov(
        spec,
        A4_STEPS,
        (samples / 10).clamp(2, 10_000),
        &runner.fork("hypotheses/a4"),
    )?;
    let a4_pass = a4.gamma_hat.abs() <= A4_TOL + a4.ci_half_width;

    let a5 = expanding_fraction(spec, samples, &runner.fork("hypotheses/a5"))?;
    let (a2_heuristic, a2_min, a2_max) = a2_heuristic(spec, &runner.fork("hypotheses/a2"))?;

    Ok(HypothesisReport {
        a1_sample_moment,
        a1_tail_index,
        a2_heuristic,
        a2_min_spectral_radius: a2_min,
        a2_max_spectral_radius: a2_max,
        a2_caveat: A2_CAVEAT,
        a3_pass,
        a3_min_margin,
        a4,
        a4_pass,
        a5_pass: a5 > 0.0,
        a5_witness_probability: a5,
        b_nonzero_prob,
        b_log_moment,
        b_pass: b_nonzero_prob > 0.0 && b_log_moment.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> EnsembleSpec {
        EnsembleSpec::from_json(json).unwrap()
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&ConeMatrix::ones(3).unwrap()) - 3.0).abs() < 1e-12);
        assert!((spectral_radius(&ConeMatrix::identity(2).unwrap()) - 1.0).abs() < 1e-12);
        // [[1,2],[3,4]] has Perron root (5 + √33)/2
        let a = ConeMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!((spectral_radius(&a) - (5.0 + 33f64.sqrt()) / 2.0).abs() < 1e-10);
        let diag = ConeMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((spectral_radius(&diag) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_mixture_satisfies_everything() {
        let s = spec(
            r#"{"dim": 2, "delta": 1, "atoms": [
                {"weight": 0.5, "A": [[1,1],[1,1]], "B": [1,1]},
                {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,1]}]}"#,
        );
        let r = check_hypotheses(&s, 20_000, &Runner::new(1)).unwrap();
        assert!(r.a3_pass);
        assert!(r.a5_pass);
        assert_eq!(r.a5_witness_probability, 0.5);
        assert!(r.a4_pass, "{:?}", r.a4);
        assert_eq!(r.a2_heuristic, A2Verdict::Pass);
        assert!(r.b_pass);
        assert_eq!(r.b_nonzero_prob, 1.0);
        assert!(r.all_pass());
    }

    #[test]
    fn identity_atom_fails_a3() {
        let s = spec(r#"{"dim": 2, "delta": 0.5, "atoms": [{"weight": 1, "A": [[1,0],[0,1]], "B": [1,0]}]}"#);
        let r = check_hypotheses(&s, 1000, &Runner::new(2)).unwrap();
        assert!(!r.a3_pass);
        assert_eq!(r.a2_heuristic, A2Verdict::DegenerateSuspected);
        assert!(!r.all_pass());
    }

    #[test]
    fn column_stochastic_law_fails_a5() {
        let s = spec(
            r#"{"dim": 2, "delta": 1, "atoms": [
                {"weight": 0.5, "A": [[0.5,0.5],[0.5,0.5]], "B": [1,1]},
                {"weight": 0.5, "A": [[0.3,0.3],[0.7,0.7]], "B": [0,0]}]}"#,
        );
        let r = check_hypotheses(&s, 1000, &Runner::new(3)).unwrap();
        assert!(!r.a5_pass);
        assert_eq!(r.b_nonzero_prob, 0.5);
        assert_eq!(r.a2_heuristic, A2Verdict::DegenerateSuspected);
    }

    #[test]
    fn requires_enough_samples() {
        let s = spec(r#"{"dim": 2, "delta": 1, "atoms": [{"weight": 1, "A": [[1,1],[1,1]], "B": [1,1]}]}"#);
        assert!(check_hypotheses(&s, 999, &Runner::new(0)).is_err());
    }
}
