use serde::Serialize;

use super::histogram::OccupationHistogram;
use crate::error::{Error, Result};
use crate::stats;

/// Radial bins with at least this many visits count as populated.
pub const POPULATED_MIN: u64 = 1_000;
pub const MIN_POPULATED_ANNULI: usize = 10;
/// Slow-variation ratios must lie here over the upper half of the grid.
pub const SLOW_VARIATION_BAND: (f64, f64) = (0.7, 1.4);
/// Sandwich constants `(a, b)`.
pub const SANDWICH: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowVariationRatio {
    pub t: f64,
    pub s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub t_grid: Vec<f64>,
    /// `L̂(t) = m̂(t·K∘)`
    pub l_hat: Vec<f64>,
    pub ratios: Vec<SlowVariationRatio>,
    /// `m̂{ta ≤ |x| ≤ tb} / L̂(t)` per grid point.
    pub sandwich_ratios: Vec<f64>,
    /// `sup_t` of the above.
    pub c_hat: f64,
    /// `L̂(t) ≤ m̂{ta ≤ |x| ≤ tb}` at every grid point.
    pub sandwich_lower_ok: bool,
    /// `max/min` of the sandwich ratio over the upper half of the grid.
    pub c_spread: f64,
    /// `(log2 radius, cumulative normalized mass up to that radius)`.
    pub mass_growth: Vec<(f64, f64)>,
    pub mass_strictly_increasing: bool,
    /// Slope of `ln(annulus mass)` against the annulus index; near zero
    /// for slowly varying tails, `−ln 2` for a summable geometric tail.
    pub annulus_log_slope: f64,
    /// Increasing and not geometrically decaying.
    pub infinite_mass_trend: bool,
    pub slow_variation_pass: bool,
}

/// Sum of normalized radial masses over bins inside `[lo, hi]` in `ln|x|`;
/// the endpoints must fall on bin edges.
fn window_mass(hist: &OccupationHistogram, masses: &[f64], lo: f64, hi: f64) -> Result<Option<f64>> {
    let c = hist.config();
    let w = c.bin_width;
    let aligned = |x: f64| ((x / w) - (x / w).round()).abs() < 1e-9;
    if !aligned(lo) || !aligned(hi) {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] in ln|x| is not aligned with the radial bins"
        )));
    }
    let first = (lo / w).round() as i64 - c.first_bin;
    let last = (hi / w).round() as i64 - c.first_bin;
    if first < 0 || last > c.bins as i64 || first >= last {
        return Ok(None);
    }
    Ok(Some(masses[first as usize..last as usize].iter().sum()))
}

/// Slow-variation, sandwich and mass-growth diagnostics of the radial tail.
///
/// `t_grid` defaults to `e^{k w}` at every populated bin edge whose window
/// `t·K∘` is populated; `s_values` defaults to `{1/2, 2}`.
pub fn tail_diagnostics(hist: &OccupationHistogram, s_values: &[f64], t_grid: Option<&[f64]>) -> Result<TailReport> {
    let c = hist.config().clone();
    let counts = hist.radial_counts();
    let masses = hist.radial_masses()?;
    let populated: Vec<usize> = (0..c.bins).filter(|&i| counts[i] >= POPULATED_MIN).collect();
    if populated.len() < MIN_POPULATED_ANNULI {
        return Err(Error::EmptyTail(format!(
            "{} populated annuli (>= {POPULATED_MIN} visits), need {MIN_POPULATED_ANNULI}",
            populated.len()
        )));
    }
    let s_values: Vec<f64> = if s_values.is_empty() { vec![0.5, 2.0] } else { s_values.to_vec() };
    let log_r = c.ref_radius.ln();
    let is_populated = |lo: f64, hi: f64| -> bool {
        let first = (lo / c.bin_width).round() as i64 - c.first_bin;
        let last = (hi / c.bin_width).round() as i64 - c.first_bin;
        first >= 0 && last <= c.bins as i64 && (first..last).all(|i| counts[i as usize] >= POPULATED_MIN)
    };

    let t_grid: Vec<f64> = match t_grid {
        Some(g) => g.to_vec(),
        None => (0..=c.bins)
            .map(|i| (c.first_bin + i as i64) as f64 * c.bin_width)
            .filter(|&u| is_populated(u - log_r, u + log_r) && is_populated(u + SANDWICH.0.ln(), u + SANDWICH.1.ln()))
            .map(f64::exp)
            .collect(),
    };
    if t_grid.len() < 2 {
        return Err(Error::EmptyTail("fewer than two grid points with a populated window".into()));
    }

    let mut l_hat = Vec::with_capacity(t_grid.len());
    let mut sandwich_ratios = Vec::with_capacity(t_grid.len());
    let mut sandwich_lower_ok = true;
    for &t in &t_grid {
        let u = t.ln();
        let l = window_mass(hist, &masses, u - log_r, u + log_r)?
            .ok_or_else(|| Error::EmptyTail(format!("t = {t} is outside the binned range")))?;
        let m = window_mass(hist, &masses, u + SANDWICH.0.ln(), u + SANDWICH.1.ln())?
            .ok_or_else(|| Error::EmptyTail(format!("t = {t} is outside the binned range")))?;
        if l == 0.0 {
            return Err(Error::EmptyTail(format!("no mass in t·K∘ at t = {t}")));
        }
        sandwich_lower_ok &= l <= m * (1.0 + 1e-12);
        l_hat.push(l);
        sandwich_ratios.push(m / l);
    }
    let c_hat = sandwich_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let upper = t_grid.len() / 2;
    let upper_c = &sandwich_ratios[upper..];
    let c_spread = upper_c.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / upper_c.iter().copied().fold(f64::INFINITY, f64::min);

    let mut ratios = Vec::new();
    let mut slow_variation_pass = true;
    for (idx, (&t, &l)) in t_grid.iter().zip(&l_hat).enumerate() {
        for &s in &s_values {
            let u = (t * s).ln();
            if let Some(ls) = window_mass(hist, &masses, u - log_r, u + log_r)? {
                if !is_populated(u - log_r, u + log_r) {
                    continue;
                }
                let ratio = ls / l;
                if idx >= upper && !(SLOW_VARIATION_BAND.0..=SLOW_VARIATION_BAND.1).contains(&ratio) {
                    slow_variation_pass = false;
                }
                ratios.push(SlowVariationRatio { t, s, ratio });
            }
        }
    }

    let lowest = populated[0];
    let highest = *populated.last().expect("nonempty");
    let mut cumulative = 0.0;
    let mut mass_growth = Vec::new();
    let mut mass_strictly_increasing = true;
    let mut log_masses = Vec::new();
    let mut indices = Vec::new();
    for i in lowest..=highest {
        let before = cumulative;
        cumulative += masses[i];
        mass_strictly_increasing &= cumulative > before;
        mass_growth.push((c.bin_bounds(i).1 / std::f64::consts::LN_2, cumulative));
        if masses[i] > 0.0 {
            log_masses.push(masses[i].ln());
            indices.push(i as f64);
        }
    }
    let annulus_log_slope = stats::linear_fit(&indices, &log_masses).map_or(f64::NAN, |(s, _)| s);
    // a tail decaying like 2^{−k/7} or faster is treated as summable
    let infinite_mass_trend = mass_strictly_increasing && annulus_log_slope > -0.1;

    Ok(TailReport {
        t_grid,
        l_hat,
        ratios,
        sandwich_ratios,
        c_hat,
        sandwich_lower_ok,
        c_spread,
        mass_growth,
        mass_strictly_increasing,
        annulus_log_slope,
        infinite_mass_trend,
        slow_variation_pass,
    })
}

/// `max/min` of the normalized masses of radial bins covering
/// `[e^{k w}, e^{(k+1) w})` for `k ∈ [k_lo, k_hi]`.
pub fn annulus_spread(hist: &OccupationHistogram, k_lo: i64, k_hi: i64) -> Result<f64> {
    let c = hist.config();
    let masses = hist.radial_masses()?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for k in k_lo..=k_hi {
        let i = k - c.first_bin;
        if i < 0 || i >= c.bins as i64 {
            return Err(Error::EmptyTail(format!("annulus {k} is outside the binned range")));
        }
        let m = masses[i as usize];
        lo = lo.min(m);
        hi = hi.max(m);
    }
    if lo == 0.0 {
        return Err(Error::EmptyTail("an annulus in the range is empty".into()));
    }
    Ok(hi / lo)
}
