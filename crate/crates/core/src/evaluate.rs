//! Agreement between simulated and measured traces, matrix comparisons and
//! the interval-length × state-count sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{to_states, TransitionCounts};
use crate::model::{build_model, BuildConfig, FsmcInterval};
use crate::simulate::{simulate, SimulatedTrace, Trajectory, DEFAULT_STEPS_PER_INTERVAL};
use crate::trace::{IntervalSlice, MeasurementTrace};

/// Mean squared difference of two traces over common spatial bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedMse {
    pub mse: f64,
    pub common_bins: usize,
    /// Common bins over bins occupied by either trace.
    pub coverage_fraction: f64,
}

fn bin_means(points: &[(f64, f64)], width: f64) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for &(d, v) in points {
        let e = acc.entry((d / width).floor() as i64).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Averages both point sets within bins `[k·w, (k+1)·w)` and returns the mean
/// squared difference of bin means over the bins both sets occupy.
pub fn binned_mse(a: &[(f64, f64)], b: &[(f64, f64)], bin_width: f64) -> Result<BinnedMse> {
    Ok(binned_series(a, b, bin_width)?.0)
}

/// Like [`binned_mse`], also returning `(bin start, mean a, mean b)` per common bin.
pub fn binned_series(a: &[(f64, f64)], b: &[(f64, f64)], bin_width: f64) -> Result<(BinnedMse, Vec<(f64, f64, f64)>)> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Domain(format!("bin width must be positive, got {bin_width}")));
    }
    let ma = bin_means(a, bin_width);
    let mb = bin_means(b, bin_width);
    let mut series = Vec::new();
    let mut sum = 0.0;
    for (k, va) in &ma {
        if let Some(vb) = mb.get(k) {
            series.push((*k as f64 * bin_width, *va, *vb));
            sum += (va - vb) * (va - vb);
        }
    }
    if series.is_empty() {
        return Err(Error::NoOverlap);
    }
    let union = ma.len() + mb.len() - series.len();
    Ok((
        BinnedMse {
            mse: sum / series.len() as f64,
            common_bins: series.len(),
            coverage_fraction: series.len() as f64 / union as f64,
        },
        series,
    ))
}

pub fn mse_trace(sim: &SimulatedTrace, measured: &MeasurementTrace, bin_width: f64) -> Result<BinnedMse> {
    let m: Vec<(f64, f64)> = measured.samples().iter().map(|s| (s.distance, s.snr)).collect();
    binned_mse(&sim.points(), &m, bin_width)
}

/// Adjacent-state probabilities `(p(k,k−1), p(k,k), p(k,k+1))` of one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub prev: Option<f64>,
    pub stay: f64,
    pub next: Option<f64>,
}

impl Band {
    fn from_triple((prev, stay, next): (Option<f64>, f64, Option<f64>)) -> Self {
        Self { prev, stay, next }
    }

    /// Entry-wise absolute difference; missing entries stay missing.
    pub fn abs_diff(&self, other: &Band) -> Band {
        let d = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b).abs());
        Band {
            prev: d(self.prev, other.prev),
            stay: (self.stay - other.stay).abs(),
            next: d(self.next, other.next),
        }
    }

    pub fn max(&self) -> f64 {
        [self.prev, Some(self.stay), self.next].into_iter().flatten().fold(0.0, f64::max)
    }
}

/// Model row `k` against the row estimated from measured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub k: usize,
    pub model: Band,
    /// `None` when the measured data never leaves state `k`.
    pub measured: Option<Band>,
    pub abs_diff: Option<Band>,
    pub max_abs_diff: Option<f64>,
}

impl ComparisonRow {
    pub fn new(k: usize, model: Band, measured: Option<Band>) -> Self {
        let abs_diff = measured.map(|m| model.abs_diff(&m));
        Self {
            k,
            model,
            measured,
            abs_diff,
            max_abs_diff: abs_diff.map(|d| d.max()),
        }
    }
}

/// Compares an interval's matrix with the matrix estimated from `slice`
/// quantized under the interval's own levels.
pub fn compare_matrices(interval: &FsmcInterval, slice: &IntervalSlice) -> Result<Vec<ComparisonRow>> {
    let seq = to_states(slice, &interval.levels)?;
    if seq.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: seq.len() });
    }
    let n = interval.n_states();
    let mut counts = TransitionCounts::new(n);
    counts.add_run(&seq.states);
    let measured = counts.to_matrix();
    Ok((1..=n)
        .map(|k| {
            let m = (counts.row_total(k) > 0).then(|| Band::from_triple(measured.band(k)));
            ComparisonRow::new(k, Band::from_triple(interval.matrix.band(k)), m)
        })
        .collect())
}

/// Settings shared by every sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Template build settings; interval length and state count are overridden per cell.
    pub build: BuildConfig,
    pub base_seed: u64,
    /// MSE bin width; defaults to the simulation step.
    pub bin_width: Option<f64>,
    /// Simulation step; defaults to `Δ/50`.
    pub step: Option<f64>,
}

impl SweepConfig {
    pub fn new(base_seed: u64) -> Self {
        Self {
            build: BuildConfig::new(5.0, 4),
            base_seed,
            bin_width: None,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub interval_m: f64,
    pub n_states: usize,
    pub mse: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the sweep cell `(Δ, N)`, derived only from its own coordinates.
pub fn cell_seed(base: u64, interval_length: f64, n_states: usize) -> u64 {
    splitmix64(base ^ splitmix64(interval_length.to_bits() ^ splitmix64(n_states as u64)))
}

/// Fits on `fit`, simulates over the part of `holdout` the model covers and
/// scores the simulation against `holdout`.
pub fn evaluate_cell(
    fit: &MeasurementTrace,
    holdout: &MeasurementTrace,
    interval_length: f64,
    n_states: usize,
    cfg: &SweepConfig,
) -> SweepCell {
    let seed = cell_seed(cfg.base_seed, interval_length, n_states);
    let run = || -> Result<f64> {
        let build = BuildConfig {
            interval_length,
            n_states,
            ..cfg.build
        };
        let model = build_model(fit, &build)?;
        let (lo, hi) = model.coverage();
        let start = holdout.min_distance().max(lo);
        let end = holdout.max_distance().min(hi);
        let step = cfg.step.unwrap_or(interval_length / DEFAULT_STEPS_PER_INTERVAL);
        let sim = simulate(&model, &Trajectory::new(start, end, step)?, seed)?;
        Ok(mse_trace(&sim, holdout, cfg.bin_width.unwrap_or(step))?.mse)
    };
    match run() {
        Ok(mse) => SweepCell {
            interval_m: interval_length,
            n_states,
            mse: Some(mse),
            seed,
            error: None,
        },
        Err(e) => SweepCell {
            interval_m: interval_length,
            n_states,
            mse: None,
            seed,
            error: Some(e.to_string()),
        },
    }
}

/// Evaluates every `(Δ, N)` pair; cells run in parallel and do not share state.
/// Output is ordered by `Δ` (outer) then `N`, following the input lists.
pub fn sweep(
    fit: &MeasurementTrace,
    holdout: &MeasurementTrace,
    intervals: &[f64],
    states: &[usize],
    cfg: &SweepConfig,
) -> Result<Vec<SweepCell>> {
    if intervals.is_empty() || states.is_empty() {
        return Err(Error::Domain("sweep needs at least one interval length and one state count".into()));
    }
    let cells: Vec<(f64, usize)> = intervals.iter().flat_map(|&d| states.iter().map(move |&n| (d, n))).collect();
    Ok(cells
        .par_iter()
        .map(|&(d, n)| evaluate_cell(fit, holdout, d, n, cfg))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mse: Option<f64>,
    pub bin_width_m: Option<f64>,
    pub coverage_fraction: Option<f64>,
    pub comparison: Vec<ComparisonRow>,
    pub sweep: Vec<SweepCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" | "table" => Ok(ReportFormat::Text),
            other => Err(Error::Domain(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn cell(p: Option<f64>) -> String {
    p.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn render_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    if let Some(mse) = report.mse {
        let _ = write!(out, "mse: {mse:.6}");
        if let Some(w) = report.bin_width_m {
            let _ = write!(out, "  (bin {w} m");
            if let Some(c) = report.coverage_fraction {
                let _ = write!(out, ", coverage {c:.3}");
            }
            out.push(')');
        }
        out.push('\n');
    }
    if !report.comparison.is_empty() {
        let _ = writeln!(
            out,
            "{:>3}  {:>9} {:>9} {:>9}  {:>9} {:>9} {:>9}  {:>8}",
            "k", "p(k,k-1)", "p(k,k)", "p(k,k+1)", "meas-1", "meas", "meas+1", "max|d|"
        );
        for r in &report.comparison {
            let m = r.measured;
            let _ = writeln!(
                out,
                "{:>3}  {:>9} {:>9} {:>9}  {:>9} {:>9} {:>9}  {:>8}",
                r.k,
                cell(r.model.prev),
                cell(Some(r.model.stay)),
                cell(r.model.next),
                cell(m.and_then(|b| b.prev)),
                cell(m.map(|b| b.stay)),
                cell(m.and_then(|b| b.next)),
                cell(r.max_abs_diff),
            );
        }
    }
    if !report.sweep.is_empty() {
        let _ = writeln!(out, "{:>10} {:>8} {:>14} {:>20}  error", "interval_m", "states", "mse", "seed");
        for c in &report.sweep {
            let _ = writeln!(
                out,
                "{:>10} {:>8} {:>14} {:>20}  {}",
                c.interval_m,
                c.n_states,
                c.mse.map_or_else(|| "-".to_string(), |v| format!("{v:.6}")),
                c.seed,
                c.error.as_deref().unwrap_or("")
            );
        }
    }
    out
}

/// Plot data `distance_m,measured_snr,simulated_snr` over common bins.
pub fn profile_csv(sim: &SimulatedTrace, measured: &MeasurementTrace, bin_width: f64) -> Result<String> {
    let m: Vec<(f64, f64)> = measured.samples().iter().map(|s| (s.distance, s.snr)).collect();
    let (_, series) = binned_series(&m, &sim.points(), bin_width)?;
    let mut out = String::from("distance_m,measured_snr,simulated_snr\n");
    for (d, meas, simv) in series {
        let _ = writeln!(out, "{d},{meas},{simv}");
    }
    Ok(out)
}

/// Plot data `interval_m,n_states,mse`; failed cells leave the mse empty.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("interval_m,n_states,mse\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{}",
            c.interval_m,
            c.n_states,
            c.mse.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_bins() {
        let a = [(0.5, 10.0), (1.5, 20.0), (2.5, 30.0)];
        let b = [(0.2, 11.0), (1.7, 19.0), (2.1, 33.0)];
        let r = binned_mse(&a, &b, 1.0).unwrap();
        assert!((r.mse - 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.common_bins, 3);
        assert_eq!(r.coverage_fraction, 1.0);
    }

    #[test]
    fn constant_offset_and_symmetry() {
        let a: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.3, (i as f64).sin())).collect();
        let b: Vec<(f64, f64)> = a.iter().map(|&(d, v)| (d, v + 1.5)).collect();
        let r = binned_mse(&a, &b, 2.0).unwrap();
        assert!((r.mse - 2.25).abs() < 1e-12);
        assert_eq!(r.mse, binned_mse(&b, &a, 2.0).unwrap().mse);
        assert_eq!(binned_mse(&a, &a, 2.0).unwrap().mse, 0.0);
    }

    #[test]
    fn disjoint_traces_have_no_overlap() {
        assert!(matches!(
            binned_mse(&[(0.0, 1.0)], &[(10.0, 1.0)], 1.0),
            Err(Error::NoOverlap)
        ));
        assert!(binned_mse(&[(0.0, 1.0)], &[(0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn partial_coverage() {
        let r = binned_mse(&[(0.5, 1.0), (1.5, 1.0)], &[(1.5, 3.0), (2.5, 0.0)], 1.0).unwrap();
        assert_eq!(r.common_bins, 1);
        assert!((r.coverage_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.mse, 4.0);
    }

    #[test]
    fn band_diffs() {
        let model = Band { prev: None, stay: 0.75, next: Some(0.25) };
        let meas = Band { prev: None, stay: 0.78, next: Some(0.22) };
        let row = ComparisonRow::new(1, model, Some(meas));
        let d = row.abs_diff.unwrap();
        assert!(d.prev.is_none());
        assert!((d.stay - 0.03).abs() < 1e-12 && (d.next.unwrap() - 0.03).abs() < 1e-12);
        assert!(ComparisonRow::new(2, model, None).max_abs_diff.is_none());
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(1, 5.0, 4);
        assert_eq!(a, cell_seed(1, 5.0, 4));
        assert_ne!(a, cell_seed(1, 5.0, 8));
        assert_ne!(a, cell_seed(1, 10.0, 4));
        assert_ne!(a, cell_seed(2, 5.0, 4));
    }

    #[test]
    fn empty_report_json() {
        let s = render_report(&EvaluationReport::default(), ReportFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["sweep"], serde_json::json!([]));
        let back: EvaluationReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, EvaluationReport::default());
    }
}
