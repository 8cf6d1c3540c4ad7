use serde::Serialize;
use serde_json::{json, Value};

use critmat::cone::ConePoint;
use critmat::ensemble::{calibrate_critical, check_hypotheses, estimate_lyapunov, EnsembleSpec};
use critmat::fluctuation::{
    clt_check, envelope_stability, log_grid, paired_survival_curves, sqrt_tail_fit, survival_curve, SurvivalCurve,
    SLOPE_BAND,
};
use critmat::measure::{
    annulus_spread, estimate_invariant_measure, tail_diagnostics, MeasureOptions, OccupationHistogram,
};
use critmat::oracle::{compare_survival, reduction_error};
use critmat::runner::Runner;
use critmat::simulator::{ladder_study, observer_study, StopMode};

use crate::args::{Cli, Command, ContractivityArgs, LadderArgs, MeasureArgs, SurvivalArgs};
use crate::output::{BoxResult, Output};

/// Thresholds of the path-observer rates.
const CONSERVATIVE_MIN: f64 = 0.99;
const CONTRACTION_MIN: f64 = 0.95;
const BERNOULLI_MIN: f64 = 0.99;
/// Dyadic annuli compared for flatness of the radial tail.
const FLAT_ANNULI: (i64, i64) = (5, 15);

/// What a command computed; `pass = false` maps to exit code 2.
pub struct Outcome {
    pub pass: bool,
}

pub struct Context<'a> {
    pub spec: Option<&'a EnsembleSpec>,
    pub runner: Runner,
    pub out: &'a Output,
}

impl Context<'_> {
    fn spec(&self) -> BoxResult<&EnsembleSpec> {
        self.spec.ok_or_else(|| "this command needs --spec".into())
    }
}

fn point(coords: &Option<Vec<f64>>, dim: usize, default: impl FnOnce() -> Vec<f64>) -> BoxResult<ConePoint> {
    let v = coords.clone().unwrap_or_else(default);
    if v.len() != dim {
        return Err(format!("start vector has {} coordinates, the spec has dimension {dim}", v.len()).into());
    }
    Ok(ConePoint::new(v)?)
}

fn basis(dim: usize, index: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[index] = value;
    v
}

pub fn execute(cli: &Cli, ctx: &Context) -> BoxResult<Outcome> {
    match &cli.command {
        Command::CheckHypotheses { n } => {
            let report = check_hypotheses(ctx.spec()?, *n, &ctx.runner)?;
            ctx.out.json("summary.json", &json!({ "command": "check-hypotheses", "samples": n, "report": report }))?;
            Ok(Outcome { pass: report.all_pass() })
        }
        Command::EstimateLyapunov { n, reps } => {
            let est = estimate_lyapunov(ctx.spec()?, *n, *reps, &ctx.runner)?;
            ctx.out.json("summary.json", &json!({ "command": "estimate-lyapunov", "estimate": est }))?;
            Ok(Outcome { pass: true })
        }
        Command::Calibrate { tol } => {
            let cal = calibrate_critical(ctx.spec()?, *tol, &ctx.runner)?;
            std::fs::write(ctx.out.path("spec.json"), cal.spec.to_json() + "\n")?;
            ctx.out.json(
                "summary.json",
                &json!({ "command": "calibrate", "scale": cal.spec.scale(), "calibration": cal }),
            )?;
            Ok(Outcome { pass: true })
        }
        Command::Survival(args) => survival(args, ctx),
        Command::Clt { n, reps } => {
            let r = clt_check(ctx.spec()?, *n, *reps, &ctx.runner)?;
            ctx.out.json("summary.json", &json!({ "command": "clt", "report": r }))?;
            Ok(Outcome { pass: r.mean_ok && !r.degenerate })
        }
        Command::Ladder(args) => ladder(args, ctx),
        Command::Contractivity(args) => contractivity(args, ctx),
        Command::InvariantMeasure(args) => {
            let hist = measure(args, ctx)?;
            hist.write_csv_path(ctx.out.path("histogram.csv"))?;
            let spread = annulus_spread(&hist, FLAT_ANNULI.0, FLAT_ANNULI.1);
            ctx.out.json(
                "summary.json",
                &json!({
                    "command": "invariant-measure",
                    "steps_per_chain": args.n,
                    "chains": args.chains,
                    "total_steps": hist.total_steps(),
                    "ref_count": hist.ref_count(),
                    "out_of_range": hist.out_of_range(),
                    "ref_window_mass": hist.ref_window_mass(),
                    "annuli": FLAT_ANNULI,
                    "annulus_spread": spread.as_ref().ok(),
                    "annulus_spread_error": spread.as_ref().err().map(|e| e.to_string()),
                }),
            )?;
            Ok(Outcome { pass: true })
        }
        Command::TailReport { histogram, measure: args } => {
            let hist = match histogram {
                Some(path) => {
                    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
                    OccupationHistogram::read_csv(file, critmat::measure::HistogramConfig::default().ref_radius)?
                }
                None => measure(args, ctx)?,
            };
            let report = tail_diagnostics(&hist, &[], None)?;
            ctx.out.csv("tail.csv", report.t_grid.iter().zip(&report.l_hat).zip(&report.sandwich_ratios).map(
                |((t, l), c)| TailRow { log2_t: t.log2(), l_hat: *l, sandwich_ratio: *c },
            ))?;
            ctx.out.csv("ratios.csv", &report.ratios)?;
            ctx.out.csv(
                "mass_growth.csv",
                report.mass_growth.iter().map(|(k, m)| MassRow { log2_radius: *k, cumulative_mass: *m }),
            )?;
            let pass = report.slow_variation_pass && report.mass_strictly_increasing && report.sandwich_lower_ok;
            ctx.out.json("summary.json", &json!({ "command": "tail-report", "report": report }))?;
            Ok(Outcome { pass })
        }
        Command::OracleCompare { a, n, reps } => {
            let spec = ctx.spec()?;
            let cmp = compare_survival(spec, *a, *n, *reps, &ctx.runner)?;
            let x0 = ConePoint::basis(spec.dim(), 0)?;
            let reduction = reduction_error(spec, &x0, 10_000, &mut ctx.runner.fork("reduction").stream(0))?;
            ctx.out.csv(
                "comparison.csv",
                (0..cmp.oracle.len()).map(|i| ComparisonRow {
                    n: i + 1,
                    empirical: cmp.empirical[i],
                    oracle: cmp.oracle[i],
                    stderr: cmp.stderr[i],
                }),
            )?;
            let pass = cmp.pass && reduction <= 1e-10;
            ctx.out.json(
                "summary.json",
                &json!({
                    "command": "oracle-compare",
                    "a": a,
                    "reps": reps,
                    "n_max": n,
                    "max_z": cmp.max_z,
                    "exact_mismatches": cmp.exact_mismatches,
                    "survival_pass": cmp.pass,
                    "reduction_max_relative_error": reduction,
                    "pass": pass,
                }),
            )?;
            Ok(Outcome { pass })
        }
    }
}

#[derive(Serialize)]
struct TailRow {
    log2_t: f64,
    l_hat: f64,
    sandwich_ratio: f64,
}

#[derive(Serialize)]
struct MassRow {
    log2_radius: f64,
    cumulative_mass: f64,
}

#[derive(Serialize)]
struct ComparisonRow {
    n: usize,
    empirical: f64,
    oracle: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct SurvivalRow<'a> {
    mode: &'a str,
    a: f64,
    n: u64,
    survival: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct BlockRow {
    sample: usize,
    block: usize,
    length: u64,
    log_norm: f64,
    b_log_radius: f64,
    log_moment: f64,
}

fn survival(args: &SurvivalArgs, ctx: &Context) -> BoxResult<Outcome> {
    let spec = ctx.spec()?;
    let grid = args.grid.clone().unwrap_or_else(|| log_grid(args.cap, 10));
    let x0 = args.x0.as_ref().map(|_| point(&args.x0, spec.dim(), Vec::new)).transpose()?;
    let mut curves: Vec<SurvivalCurve> = Vec::new();
    let mut per_level = Vec::new();
    let mut fits = Vec::new();
    let mut pass = true;
    for (i, &a) in args.a.iter().enumerate() {
        let runner = ctx.runner.fork(&format!("level-{i}"));
        let (norm, vector) = match &x0 {
            Some(x) => {
                let (v, m) = paired_survival_curves(spec, x, a, &grid, args.reps, args.cap, &runner)?;
                (m, Some(v))
            }
            None => (survival_curve(spec, &StopMode::Norm, a, &grid, args.reps, args.cap, &runner)?, None),
        };
        let fit = sqrt_tail_fit(&norm, None);
        let slope_ok = fit.as_ref().map_or(false, |f| f.valid && (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&f.slope));
        pass &= slope_ok;
        let dominated = vector.as_ref().map(|v| v.survival.iter().zip(&norm.survival).all(|(p, q)| p <= q));
        pass &= dominated.unwrap_or(true);
        per_level.push(json!({
            "a": a,
            "censored_fraction": norm.censored_fraction,
            "warnings": norm.warnings,
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "slope_ok": slope_ok,
            "vector_dominated_by_norm": dominated,
        }));
        if let Ok(f) = fit {
            fits.push(f);
        }
        curves.push(norm);
        curves.extend(vector);
    }
    let envelope = (args.a.len() >= 2).then(|| envelope_stability(&fits));
    if let Some(e) = &envelope {
        pass &= e.ok && fits.len() == args.a.len();
    }
    ctx.out.csv(
        "survival.csv",
        curves.iter().flat_map(|c| {
            c.grid.iter().enumerate().map(move |(i, &n)| SurvivalRow {
                mode: &c.mode,
                a: c.a,
                n,
                survival: c.survival[i],
                stderr: c.stderr[i],
            })
        }),
    )?;
    ctx.out.json(
        "summary.json",
        &json!({
            "command": "survival",
            "reps": args.reps,
            "cap": args.cap,
            "slope_band": SLOPE_BAND,
            "levels": per_level,
            "envelope": envelope,
            "pass": pass,
        }),
    )?;
    Ok(Outcome { pass })
}

fn ladder(args: &LadderArgs, ctx: &Context) -> BoxResult<Outcome> {
    let spec = ctx.spec()?;
    let x0 = point(&args.x0, spec.dim(), || basis(spec.dim(), 0, 1.0))?;
    let study = ladder_study(spec, &x0, args.a, args.n, args.reps, args.cap, &ctx.runner)?;
    ctx.out.csv(
        "blocks.csv",
        study.paths.iter().enumerate().flat_map(|(s, p)| {
            p.blocks.iter().enumerate().map(move |(k, b)| BlockRow {
                sample: s,
                block: k + 1,
                length: b.length,
                log_norm: b.log_norm,
                b_log_radius: b.b_log_radius,
                log_moment: b.log_moment,
            })
        }),
    )?;
    let pass = study.norm_bound_violations == 0 && study.max_reconstruction_error <= 1e-9 && study.ks_pass();
    ctx.out.json("summary.json", &json!({ "command": "ladder", "study": study, "pass": pass }))?;
    Ok(Outcome { pass })
}

fn contractivity(args: &ContractivityArgs, ctx: &Context) -> BoxResult<Outcome> {
    let spec = ctx.spec()?;
    let d = spec.dim();
    let x0 = point(&args.x0, d, || basis(d, 0, 1.0))?;
    let y0 = point(&args.y0, d, || basis(d, d - 1, 5.0))?;
    let study = observer_study(spec, &x0, &y0, args.n, args.reps, &ctx.runner)?;
    ctx.out.csv("paths.csv", &study.per_path)?;
    let checks: Value = json!({
        "conservative": study.conservative_fraction >= CONSERVATIVE_MIN,
        "contraction": study.contraction_fraction >= CONTRACTION_MIN,
        "bernoulli": study.bernoulli_fraction >= BERNOULLI_MIN,
    });
    let pass = checks.as_object().expect("object").values().all(|v| v == &Value::Bool(true));
    let mut summary = serde_json::to_value(&study)?;
    summary.as_object_mut().expect("object").remove("per_path");
    ctx.out.json(
        "summary.json",
        &json!({
            "command": "contractivity",
            "study": summary,
            "thresholds": { "conservative": CONSERVATIVE_MIN, "contraction": CONTRACTION_MIN, "bernoulli": BERNOULLI_MIN },
            "checks": checks,
            "pass": pass,
        }),
    )?;
    Ok(Outcome { pass })
}

fn measure(args: &MeasureArgs, ctx: &Context) -> BoxResult<OccupationHistogram> {
    let spec = ctx.spec()?;
    let x0 = point(&args.x0, spec.dim(), || basis(spec.dim(), 0, 1.0))?;
    let options = MeasureOptions {
        chains: args.chains,
        ..MeasureOptions::default()
    };
    Ok(estimate_invariant_measure(spec, &x0, args.n, &options, &ctx.runner)?)
}
