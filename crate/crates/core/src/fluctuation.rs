//! Survival curves of the stopping times `τ^{x,a}` and `τ^a`, their
//! `1/√n` tail and the central limit normalization of `ln ‖A_{n,1}‖`.

use serde::Serialize;

use crate::cone::ConePoint;
use crate::ensemble::{estimate_lyapunov, EnsembleSpec, A4_TOL};
use crate::error::{Error, Result};
use crate::runner::Runner;
use crate::simulator::{paired_stopping_times, stopping_time, ProductBundle, StopMode, StopOutcome};
use crate::stats;

pub const MIN_SURVIVAL_REPS: usize = 1_000;
pub const DEFAULT_FIT_RANGE: (f64, f64) = (1e2, 1e4);
/// Above this censored share the tail fit is void.
pub const MAX_CENSORED: f64 = 0.2;
pub const ENVELOPE_FACTOR: f64 = 2.0;
pub const MIN_CLT_STEPS: usize = 1_000;
pub const MIN_CLT_REPS: usize = 1_000;
/// Accepted range of the log-log slope of `P̂(τ > n)`.
pub const SLOPE_BAND: (f64, f64) = (-0.65, -0.35);

/// Roughly `per_decade` log-spaced integers from 1 up to and including `max`.
pub fn log_grid(max: u64, per_decade: usize) -> Vec<u64> {
    let top = (max as f64).log10();
    let steps = (top * per_decade as f64).ceil() as usize;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|i| 10f64.powf(i as f64 / per_decade as f64).round() as u64)
        .filter(|&n| n >= 1 && n < max)
        .collect();
    grid.push(max);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub mode: String,
    pub a: f64,
    pub x: Option<Vec<f64>>,
    pub grid: Vec<u64>,
    /// `P̂(τ > n)` at each grid point.
    pub survival: Vec<f64>,
    /// `√(p̂(1−p̂)/reps)`
    pub stderr: Vec<f64>,
    pub reps: usize,
    pub cap: u64,
    pub censored_fraction: f64,
    pub warnings: Vec<String>,
}

impl SurvivalCurve {
    /// Builds the curve from per-path outcomes; censored paths survive
    /// every grid point (all of which are at most the cap).
    pub fn from_outcomes(mode: &StopMode, a: f64, grid: &[u64], cap: u64, outcomes: &[StopOutcome]) -> Self {
        let reps = outcomes.len();
        let mut times: Vec<u64> = outcomes.iter().filter_map(|o| o.time()).collect();
        times.sort_unstable();
        let censored = reps - times.len();
        let survival: Vec<f64> = grid
            .iter()
            .map(|&n| {
                let stopped = times.partition_point(|&t| t <= n);
                (reps - stopped) as f64 / reps as f64
            })
            .collect();
        let stderr = survival.iter().map(|p| (p * (1.0 - p) / reps as f64).sqrt()).collect();
        SurvivalCurve {
            mode: mode.name().to_string(),
            a,
            x: match mode {
                StopMode::Vector(x) => Some(x.coords().to_vec()),
                StopMode::Norm => None,
            },
            grid: grid.to_vec(),
            survival,
            stderr,
            reps,
            cap,
            censored_fraction: censored as f64 / reps as f64,
            warnings: Vec::new(),
        }
    }
}

fn check_grid(grid: &[u64], cap: u64) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grid must be a nonempty increasing list of positive steps".into()));
    }
    if *grid.last().expect("nonempty") > cap {
        return Err(Error::InvalidArgument(format!("grid extends past the cap of {cap} steps")));
    }
    Ok(())
}

fn criticality_warning(spec: &EnsembleSpec, runner: &Runner) -> Result<Option<String>> {
    let est = estimate_lyapunov(spec, 1_000, 64, &runner.fork("criticality"))?;
    Ok((est.gamma_hat.abs() > A4_TOL + est.ci_half_width).then(|| {
        format!(
            "ensemble does not look critical: gamma_hat = {:.3e} +/- {:.1e}",
            est.gamma_hat, est.ci_half_width
        )
    }))
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_SURVIVAL_REPS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SURVIVAL_REPS} paths, got {reps}")));
    }
    Ok(())
}

/// `P̂(τ > n)` over `reps` paths; path `k` uses stream `k` of `runner`.
pub fn survival_curve(
    spec: &EnsembleSpec,
    mode: &StopMode,
    a: f64,
    grid: &[u64],
    reps: usize,
    cap: u64,
    runner: &Runner,
) -> Result<SurvivalCurve> {
    check_grid(grid, cap)?;
    check_reps(reps)?;
    let outcomes = runner
        .map(reps, |k| stopping_time(spec, mode, a, cap, &mut runner.stream(k as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut curve = SurvivalCurve::from_outcomes(mode, a, grid, cap, &outcomes);
    curve.warnings.extend(criticality_warning(spec, runner)?);
    Ok(curve)
}

/// Vector-mode and norm-mode curves from the same paths (`|x| ≤ 1`).
pub fn paired_survival_curves(
    spec: &EnsembleSpec,
    x: &ConePoint,
    a: f64,
    grid: &[u64],
    reps: usize,
    cap: u64,
    runner: &Runner,
) -> Result<(SurvivalCurve, SurvivalCurve)> {
    check_grid(grid, cap)?;
    check_reps(reps)?;
    let pairs = runner
        .map(reps, |k| paired_stopping_times(spec, x, a, cap, &mut runner.stream(k as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (vector, norm): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let mut v = SurvivalCurve::from_outcomes(&StopMode::Vector(x.clone()), a, grid, cap, &vector);
    let mut m = SurvivalCurve::from_outcomes(&StopMode::Norm, a, grid, cap, &norm);
    if let Some(w) = criticality_warning(spec, runner)? {
        v.warnings.push(w.clone());
        m.warnings.push(w);
    }
    Ok((v, m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub a: f64,
    /// Least-squares slope of `ln P̂(τ > n)` against `ln n` over the fit range.
    pub slope: f64,
    pub intercept: f64,
    pub fit_points: usize,
    /// `max_n P̂(τ > n) √n / (1 + ln a)` over the grid.
    pub kappa_hat: f64,
    /// The same maximum within each decade `[10^k, 10^{k+1})`.
    pub decade_kappa: Vec<(u32, f64)>,
    /// False when too many paths were censored.
    pub valid: bool,
    pub warnings: Vec<String>,
}

/// Log-log slope and envelope constant of a survival curve.
pub fn sqrt_tail_fit(curve: &SurvivalCurve, fit_range: Option<(f64, f64)>) -> Result<TailFit> {
    if curve.survival.iter().all(|&p| p == 0.0 || p == 1.0) {
        return Err(Error::DegenerateCurve("survival takes only the values 0 and 1".into()));
    }
    let first = *curve.grid.first().expect("nonempty grid") as f64;
    let last = *curve.grid.last().expect("nonempty grid") as f64;
    if last < 100.0 * first {
        return Err(Error::DegenerateCurve("grid spans fewer than two decades".into()));
    }
    let (lo, hi) = fit_range.unwrap_or(DEFAULT_FIT_RANGE);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&n, &p) in curve.grid.iter().zip(&curve.survival) {
        let n = n as f64;
        if n >= lo && n <= hi && n <= curve.cap as f64 && p > 0.0 {
            xs.push(n.ln());
            ys.push(p.ln());
        }
    }
    let (slope, intercept) = stats::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::DegenerateCurve("fewer than two positive points in the fit range".into()))?;
    let norm = 1.0 + curve.a.ln();
    let mut kappa_hat: f64 = 0.0;
    let mut decade_kappa: Vec<(u32, f64)> = Vec::new();
    for (&n, &p) in curve.grid.iter().zip(&curve.survival) {
        let k = p * (n as f64).sqrt() / norm;
        kappa_hat = kappa_hat.max(k);
        let decade = (n as f64).log10().floor() as u32;
        match decade_kappa.last_mut() {
            Some((d, v)) if *d == decade => *v = v.max(k),
            _ => decade_kappa.push((decade, k)),
        }
    }
    let mut warnings = curve.warnings.clone();
    let valid = curve.censored_fraction <= MAX_CENSORED;
    if !valid {
        warnings.push(format!(
            "{:.1}% of paths hit the cap; fit is void",
            100.0 * curve.censored_fraction
        ));
    }
    Ok(TailFit {
        a: curve.a,
        slope,
        intercept,
        fit_points: xs.len(),
        kappa_hat,
        decade_kappa,
        valid,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub kappas: Vec<(f64, f64)>,
    /// `max κ̂ / min κ̂` across levels.
    pub ratio: f64,
    pub ok: bool,
}

/// Whether `κ̂` is stable within a factor 2 across several levels `a`.
pub fn envelope_stability(fits: &[TailFit]) -> EnvelopeCheck {
    let kappas: Vec<(f64, f64)> = fits.iter().map(|f| (f.a, f.kappa_hat)).collect();
    let max = kappas.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
    let min = kappas.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    EnvelopeCheck {
        ok: ratio.is_finite() && ratio <= ENVELOPE_FACTOR && fits.iter().all(|f| f.valid),
        kappas,
        ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub steps: usize,
    pub reps: usize,
    /// Mean of `ln ‖A_{n,1}‖ / √n`.
    pub mean_norm: f64,
    pub var_hat: f64,
    /// Kolmogorov–Smirnov distance to `N(0, var_hat)`.
    pub ks_stat: f64,
    /// `|mean| ≤ 3 √(var/reps)`
    pub mean_ok: bool,
    pub degenerate: bool,
    pub criticality_warning: Option<String>,
}

pub fn clt_check(spec: &EnsembleSpec, n: usize, reps: usize, runner: &Runner) -> Result<CltReport> {
    if n < MIN_CLT_STEPS || reps < MIN_CLT_REPS {
        return Err(Error::InvalidArgument(format!(
            "need n >= {MIN_CLT_STEPS} and reps >= {MIN_CLT_REPS}, got {n} and {reps}"
        )));
    }
    let root_n = (n as f64).sqrt();
    let xs = runner
        .map(reps, |k| -> Result<f64> {
            let mut rng = runner.stream(k as u64);
            let mut sampler = spec.sampler();
            let mut product = ProductBundle::identity(spec.dim());
            for _ in 0..n {
                product.step(sampler.sample_pair(&mut rng)?.0);
            }
            Ok(product.log_norm() / root_n)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean_norm = stats::mean(&xs);
    let var_hat = stats::variance(&xs);
    let degenerate = var_hat <= 1e-24;
    let mean_ok = mean_norm.abs() <= 3.0 * (var_hat / reps as f64).sqrt();
    let ks_stat = if degenerate { f64::NAN } else { stats::ks_normal(&xs, 0.0, var_hat.sqrt()) };
    let criticality_warning = (!mean_ok).then(|| {
        format!("mean of ln||A_n,1||/sqrt(n) is {mean_norm:.4}, not centered; the ensemble is not critical")
    });
    Ok(CltReport {
        steps: n,
        reps,
        mean_norm,
        var_hat,
        ks_stat,
        mean_ok,
        degenerate,
        criticality_warning,
    })
}
