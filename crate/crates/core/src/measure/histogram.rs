use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binning of `(ln|x|, direction)` and the reference window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramConfig {
    /// Width of a radial bin in `ln|x|`; bins are aligned at `ln|x| = 0`.
    pub bin_width: f64,
    /// Index of the lowest radial bin, which covers
    /// `[first_bin·w, (first_bin+1)·w)`.
    pub first_bin: i64,
    pub bins: usize,
    /// Reference window `{1/R ≤ |x| ≤ R}`.
    pub ref_radius: f64,
    pub batches: usize,
}

impl Default for HistogramConfig {
    /// Dyadic annuli `[2^k, 2^{k+1})` for `k ∈ [−32, 96)`, `R = 2`, 20 batches.
    fn default() -> Self {
        Self {
            bin_width: std::f64::consts::LN_2,
            first_bin: -32,
            bins: 128,
            ref_radius: 2.0,
            batches: 20,
        }
    }
}

impl HistogramConfig {
    fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::InvalidArgument(format!("bin width must be positive, got {}", self.bin_width)));
        }
        if self.bins == 0 || self.batches < 2 {
            return Err(Error::InvalidArgument("need at least one bin and two batches".into()));
        }
        if !(self.ref_radius > 1.0 && self.ref_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("reference radius must exceed 1, got {}", self.ref_radius)));
        }
        Ok(())
    }

    /// `[lo, hi)` of radial bin `i` in `ln|x|`.
    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        let k = self.first_bin + i as i64;
        (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)
    }
}

/// Number of direction cells in dimension `d`: one per ordered pair of
/// (largest, second largest) coordinate, plus a center cell.
pub fn direction_cells(d: usize) -> usize {
    d * (d - 1) + 1
}

/// Cell 0 is the center, `‖w − 1/d‖_∞ ≤ 1/(2d)`; otherwise the cell is
/// fixed by the indices of the two largest weights.
pub fn direction_cell(w: &[f64]) -> usize {
    let d = w.len();
    let center = 1.0 / d as f64;
    if w.iter().all(|x| (x - center).abs() <= 0.5 * center) {
        return 0;
    }
    let (mut first, mut second) = if w[1] > w[0] { (1, 0) } else { (0, 1) };
    for (i, &x) in w.iter().enumerate().skip(2) {
        if x > w[first] {
            second = first;
            first = i;
        } else if x > w[second] {
            second = i;
        }
    }
    let j = if second > first { second - 1 } else { second };
    1 + first * (d - 1) + j
}

/// Occupation counts of a trajectory over radial × direction bins, with
/// per-batch counts for error bars and reference-window counts for
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationHistogram {
    config: HistogramConfig,
    dim: usize,
    cells: usize,
    counts: Vec<u64>,
    batch_counts: Vec<u64>,
    ref_batch: Vec<u64>,
    below: u64,
    above: u64,
    total_steps: u64,
    steps_per_batch: u64,
    log_ref: f64,
}

/// One row of the exported table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub log2_radius_lo: f64,
    pub log2_radius_hi: f64,
    pub direction_cell: usize,
    pub count: u64,
    pub normalized_mass: f64,
    pub stderr: f64,
}

impl OccupationHistogram {
    /// Empty histogram for a run of `planned_steps` steps.
    pub fn new(config: HistogramConfig, dim: usize, planned_steps: u64) -> Result<Self> {
        config.validate()?;
        if planned_steps == 0 {
            return Err(Error::InvalidArgument("histogram needs a positive step count".into()));
        }
        let cells = direction_cells(dim);
        let steps_per_batch = planned_steps.div_ceil(config.batches as u64);
        Ok(Self {
            counts: vec![0; config.bins * cells],
            batch_counts: vec![0; config.batches * config.bins * cells],
            ref_batch: vec![0; config.batches],
            below: 0,
            above: 0,
            total_steps: 0,
            steps_per_batch,
            log_ref: config.ref_radius.ln(),
            cells,
            dim,
            config,
        })
    }

    /// Histogram with given radial counts, all in the center direction cell
    /// and spread evenly over batches. The reference window must be a union
    /// of whole bins.
    pub fn from_radial_counts(config: HistogramConfig, dim: usize, counts: &[u64]) -> Result<Self> {
        if counts.len() != config.bins {
            return Err(Error::InvalidArgument(format!("expected {} radial counts, got {}", config.bins, counts.len())));
        }
        let total: u64 = counts.iter().sum();
        let mut h = Self::new(config, dim, total.max(1))?;
        let w = h.config.bin_width;
        let edge = h.log_ref / w;
        if (edge - edge.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument("reference window is not a union of bins".into()));
        }
        let edge = edge.round() as i64;
        let b = h.config.batches as u64;
        let stride = h.config.bins * h.cells;
        for (i, &c) in counts.iter().enumerate() {
            let slot = i * h.cells;
            h.counts[slot] = c;
            for k in 0..b {
                let share = c / b + u64::from(k < c % b);
                h.batch_counts[k as usize * stride + slot] = share;
                let bin = h.config.first_bin + i as i64;
                if (-edge..edge).contains(&bin) {
                    h.ref_batch[k as usize] += share;
                }
            }
        }
        h.total_steps = total;
        Ok(h)
    }

    pub fn config(&self) -> &HistogramConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Records the state at 0-based step `step`.
    #[inline]
    pub fn record(&mut self, step: u64, log_radius: f64, direction: &[f64]) {
        self.total_steps += 1;
        let batch = ((step / self.steps_per_batch) as usize).min(self.config.batches - 1);
        if log_radius.abs() <= self.log_ref {
            self.ref_batch[batch] += 1;
        }
        let k = (log_radius / self.config.bin_width).floor();
        let i = k - self.config.first_bin as f64;
        if !(i >= 0.0) {
            self.below += 1;
            return;
        }
        if i >= self.config.bins as f64 {
            self.above += 1;
            return;
        }
        let slot = i as usize * self.cells + direction_cell(direction);
        self.counts[slot] += 1;
        self.batch_counts[batch * self.config.bins * self.cells + slot] += 1;
    }

    /// Adds another histogram with the same configuration; batches are
    /// matched by index.
    pub fn merge(&mut self, other: &OccupationHistogram) -> Result<()> {
        if other.config != self.config || other.dim != self.dim {
            return Err(Error::InvalidArgument("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.batch_counts.iter_mut().zip(&other.batch_counts) {
            *a += b;
        }
        for (a, b) in self.ref_batch.iter_mut().zip(&other.ref_batch) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
        self.total_steps += other.total_steps;
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// Steps whose radius fell outside the binned range.
    pub fn out_of_range(&self) -> u64 {
        self.below + self.above
    }

    pub fn ref_count(&self) -> u64 {
        self.ref_batch.iter().sum()
    }

    /// Mass of the reference window after normalization: 1, or `NaN` if it
    /// was never visited.
    pub fn ref_window_mass(&self) -> f64 {
        let r = self.ref_count();
        if r == 0 {
            f64::NAN
        } else {
            r as f64 / r as f64
        }
    }

    pub fn count(&self, bin: usize, cell: usize) -> u64 {
        self.counts[bin * self.cells + cell]
    }

    /// Counts per radial bin, summed over directions.
    pub fn radial_counts(&self) -> Vec<u64> {
        self.counts.chunks(self.cells).map(|c| c.iter().sum()).collect()
    }

    fn check_ref(&self) -> Result<f64> {
        match self.ref_count() {
            0 => Err(Error::ReferenceStarved),
            r => Ok(r as f64),
        }
    }

    /// `m̂(bin)/m̂(K∘)` per radial bin.
    pub fn radial_masses(&self) -> Result<Vec<f64>> {
        let r = self.check_ref()?;
        Ok(self.radial_counts().iter().map(|&c| c as f64 / r).collect())
    }

    /// Batch-means standard error of `Σ_{slots} count / ref_count` for a
    /// set of `(bin, cell)` slots, by the delta method for a ratio.
    fn ratio_stderr(&self, slots: impl Fn(usize) -> u64) -> f64 {
        let b = self.config.batches;
        let refs: Vec<f64> = self.ref_batch.iter().map(|&v| v as f64).collect();
        let nums: Vec<f64> = (0..b).map(|k| slots(k) as f64).collect();
        let ref_total: f64 = refs.iter().sum();
        if ref_total == 0.0 {
            return f64::NAN;
        }
        let ratio = nums.iter().sum::<f64>() / ref_total;
        let ref_mean = ref_total / b as f64;
        let ss: f64 = nums
            .iter()
            .zip(&refs)
            .map(|(n, r)| ((n - ratio * r) / ref_mean).powi(2))
            .sum();
        (ss / (b * (b - 1)) as f64).sqrt()
    }

    /// Standard error of the normalized mass of radial bin `bin`.
    pub fn radial_stderr(&self, bin: usize) -> f64 {
        let stride = self.config.bins * self.cells;
        self.ratio_stderr(|k| {
            let base = k * stride + bin * self.cells;
            self.batch_counts[base..base + self.cells].iter().sum()
        })
    }

    /// Table rows for every `(bin, cell)`.
    pub fn rows(&self) -> Result<Vec<HistogramRow>> {
        let r = self.check_ref()?;
        let stride = self.config.bins * self.cells;
        let mut out = Vec::with_capacity(self.counts.len());
        for bin in 0..self.config.bins {
            let (lo, hi) = self.config.bin_bounds(bin);
            for cell in 0..self.cells {
                let slot = bin * self.cells + cell;
                out.push(HistogramRow {
                    log2_radius_lo: lo / std::f64::consts::LN_2,
                    log2_radius_hi: hi / std::f64::consts::LN_2,
                    direction_cell: cell,
                    count: self.counts[slot],
                    normalized_mass: self.counts[slot] as f64 / r,
                    stderr: self.ratio_stderr(|k| self.batch_counts[k * stride + slot]),
                });
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows()? {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Direction
    /// cells are summed into radial counts, and the batch structure is
    /// lost, so standard errors of the result are not meaningful.
    pub fn read_csv<R: Read>(reader: R, ref_radius: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut radial: Vec<(i64, u64)> = Vec::new();
        let mut width: Option<f64> = None;
        let mut max_cell = 0;
        for row in rdr.deserialize() {
            let row: HistogramRow = row?;
            let w = (row.log2_radius_hi - row.log2_radius_lo) * std::f64::consts::LN_2;
            let w = *width.get_or_insert(w);
            let k = (row.log2_radius_lo * std::f64::consts::LN_2 / w).round() as i64;
            max_cell = max_cell.max(row.direction_cell);
            match radial.last_mut() {
                Some((last, c)) if *last == k => *c += row.count,
                _ => radial.push((k, row.count)),
            }
        }
        let bin_width = width.ok_or_else(|| Error::InvalidArgument("histogram table is empty".into()))?;
        if radial.windows(2).any(|p| p[1].0 != p[0].0 + 1) {
            return Err(Error::InvalidArgument("histogram table has missing or unordered radial bins".into()));
        }
        let dim = (1..=64)
            .find(|&d| direction_cells(d) == max_cell + 1)
            .ok_or_else(|| Error::InvalidArgument(format!("{} direction cells match no dimension", max_cell + 1)))?;
        let config = HistogramConfig {
            bin_width,
            first_bin: radial[0].0,
            bins: radial.len(),
            ref_radius,
            ..HistogramConfig::default()
        };
        let counts: Vec<u64> = radial.iter().map(|r| r.1).collect();
        Self::from_radial_counts(config, dim, &counts)
    }

    /// Merges pairs of radial bins into bins twice as wide. The lowest
    /// bin index must be even so the coarse bins stay aligned at 0.
    pub fn coarsen(&self) -> Result<OccupationHistogram> {
        if self.config.first_bin % 2 != 0 {
            return Err(Error::InvalidArgument("coarsening needs an even first bin".into()));
        }
        let bins = self.config.bins.div_ceil(2);
        let config = HistogramConfig {
            bin_width: 2.0 * self.config.bin_width,
            first_bin: self.config.first_bin / 2,
            bins,
            ..self.config.clone()
        };
        let fold = |src: &[u64], dst: &mut [u64]| {
            for (i, chunk) in src.chunks(self.cells).enumerate() {
                let target = (i / 2) * self.cells;
                for (c, v) in chunk.iter().enumerate() {
                    dst[target + c] += v;
                }
            }
        };
        let mut counts = vec![0; bins * self.cells];
        fold(&self.counts, &mut counts);
        let stride = self.config.bins * self.cells;
        let coarse_stride = bins * self.cells;
        let mut batch_counts = vec![0; self.config.batches * coarse_stride];
        for k in 0..self.config.batches {
            fold(
                &self.batch_counts[k * stride..(k + 1) * stride],
                &mut batch_counts[k * coarse_stride..(k + 1) * coarse_stride],
            );
        }
        Ok(OccupationHistogram {
            config,
            counts,
            batch_counts,
            ref_batch: self.ref_batch.clone(),
            ..self.clone()
        })
    }

    /// Radial counts restricted to `lo ≤ ln|x| < hi` (bin-aligned), as
    /// probabilities over `(bin, cell)` slots.
    pub fn window_distribution(&self, log_lo: f64, log_hi: f64) -> Result<Vec<f64>> {
        let mut slots = Vec::new();
        for bin in 0..self.config.bins {
            let (lo, hi) = self.config.bin_bounds(bin);
            if lo >= log_lo - 1e-9 && hi <= log_hi + 1e-9 {
                for cell in 0..self.cells {
                    slots.push(self.count(bin, cell) as f64);
                }
            }
        }
        let total: f64 = slots.iter().sum();
        if total == 0.0 {
            return Err(Error::ReferenceStarved);
        }
        Ok(slots.into_iter().map(|c| c / total).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_cells_cover_the_simplex() {
        assert_eq!(direction_cells(2), 3);
        assert_eq!(direction_cell(&[0.5, 0.5]), 0);
        assert_eq!(direction_cell(&[0.9, 0.1]), 1);
        assert_eq!(direction_cell(&[0.1, 0.9]), 2);
        let mut seen = vec![false; direction_cells(3)];
        for w in [
            [1.0 / 3.0; 3],
            [0.8, 0.15, 0.05],
            [0.8, 0.05, 0.15],
            [0.15, 0.8, 0.05],
            [0.05, 0.8, 0.15],
            [0.15, 0.05, 0.8],
            [0.05, 0.15, 0.8],
        ] {
            seen[direction_cell(&w)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn counts_and_normalization() {
        let mut h = OccupationHistogram::new(HistogramConfig::default(), 2, 100).unwrap();
        for step in 0..100 {
            let u = if step % 4 == 0 { 3.5 * std::f64::consts::LN_2 } else { 0.0 };
            h.record(step, u, &[0.5, 0.5]);
        }
        h.record(100, 1e6, &[0.5, 0.5]);
        assert_eq!(h.total_steps(), 101);
        assert_eq!(h.out_of_range(), 1);
        assert_eq!(h.ref_count(), 75);
        assert_eq!(h.ref_window_mass(), 1.0);
        let masses = h.radial_masses().unwrap();
        assert_eq!(masses[32], 1.0);
        assert!((masses[35] - 25.0 / 75.0).abs() < 1e-15);
        let total: u64 = h.radial_counts().iter().sum();
        assert_eq!(total + h.out_of_range(), h.total_steps());
    }

    #[test]
    fn starved_reference_window_is_an_error() {
        let mut h = OccupationHistogram::new(HistogramConfig::default(), 2, 10).unwrap();
        h.record(0, 10.0, &[1.0, 0.0]);
        assert!(matches!(h.radial_masses(), Err(Error::ReferenceStarved)));
    }

    #[test]
    fn coarsening_preserves_mass() {
        let mut h = OccupationHistogram::new(HistogramConfig::default(), 2, 1000).unwrap();
        for step in 0..1000u64 {
            let u = ((step * 7919) % 40) as f64 * 0.37 - 5.0;
            h.record(step, u, &[0.3, 0.7]);
        }
        let c = h.coarsen().unwrap();
        let fine: f64 = h.radial_masses().unwrap().iter().sum();
        let coarse: f64 = c.radial_masses().unwrap().iter().sum();
        assert!((fine - coarse).abs() <= 1e-12 * fine);
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = OccupationHistogram::new(HistogramConfig::default(), 2, 10).unwrap();
        let mut b = a.clone();
        a.record(0, 0.1, &[0.5, 0.5]);
        b.record(9, 0.1, &[0.5, 0.5]);
        a.merge(&b).unwrap();
        assert_eq!(a.ref_count(), 2);
        assert_eq!(a.total_steps(), 2);
    }

    #[test]
    fn csv_has_expected_columns() {
        let mut h = OccupationHistogram::new(HistogramConfig { bins: 2, first_bin: -1, ..Default::default() }, 2, 10).unwrap();
        h.record(0, 0.1, &[0.5, 0.5]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("log2_radius_lo,log2_radius_hi,direction_cell,count,normalized_mass,stderr\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn csv_round_trip_keeps_radial_counts() {
        let config = HistogramConfig { bins: 6, first_bin: -3, ..Default::default() };
        let mut h = OccupationHistogram::new(config.clone(), 3, 100).unwrap();
        for (k, u) in [-1.5, -0.2, 0.3, 0.3, 1.2, 1.9].into_iter().enumerate() {
            h.record(k as u64, u, &[0.6, 0.3, 0.1]);
        }
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = OccupationHistogram::read_csv(buf.as_slice(), 2.0).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.config().first_bin, -3);
        assert_eq!(back.radial_counts(), h.radial_counts());
        assert_eq!(back.ref_count(), h.ref_count());
    }
}
