//! Invariant-measure estimation from occupation statistics, normalized by
//! a reference annulus, and diagnostics of its radial tail.

mod estimate;
mod histogram;
mod tail;

pub use estimate::{
    estimate_invariant_measure, total_variation, uniqueness_check, MeasureOptions, UniquenessReport,
    MIN_MEASURE_STEPS, UNIQUENESS_TV, UNIQUENESS_WINDOW,
};
pub use histogram::{direction_cell, direction_cells, HistogramConfig, HistogramRow, OccupationHistogram};
pub use tail::{
    annulus_spread, tail_diagnostics, SlowVariationRatio, TailReport, MIN_POPULATED_ANNULI, POPULATED_MIN,
    SANDWICH, SLOW_VARIATION_BAND,
};
