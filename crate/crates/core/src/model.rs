//! The location-dependent channel model: one level set, transition matrix and
//! state distribution per spatial interval, plus its JSON file format.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{
    amplitudes, fit_family, select_model, snr_pdf, Family, FamilyParams, SnrPdf, MIN_SLICE_SAMPLES,
};
use crate::error::{Error, Result};
use crate::markov::{estimate_from_runs, occupancy, TransitionMatrix};
use crate::quantizer::{lloyd_max, quantize, LevelSet, QuantizerConfig};
use crate::trace::{partition, IntervalPartition, IntervalSlice, MeasurementTrace, TraceSample};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// How the amplitude family of each interval is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FamilyPolicy {
    /// Smallest AICc among Rayleigh, Rice and Nakagami.
    #[default]
    Auto,
    Fixed(Family),
}

impl std::str::FromStr for FamilyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(FamilyPolicy::Auto)
        } else {
            s.parse().map(FamilyPolicy::Fixed)
        }
    }
}

impl std::fmt::Display for FamilyPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FamilyPolicy::Auto => f.write_str("auto"),
            FamilyPolicy::Fixed(family) => f.write_str(family.name()),
        }
    }
}

/// Everything [`build_model`] needs besides the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub interval_length: f64,
    pub origin: f64,
    pub n_states: usize,
    pub quantizer: QuantizerConfig,
    pub family: FamilyPolicy,
    pub carrier_frequency_hz: Option<f64>,
}

impl BuildConfig {
    pub fn new(interval_length: f64, n_states: usize) -> Self {
        Self {
            interval_length,
            origin: 0.0,
            n_states,
            quantizer: QuantizerConfig::default(),
            family: FamilyPolicy::Auto,
            carrier_frequency_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub carrier_frequency_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_trace: Option<String>,
    #[serde(default)]
    pub toolkit_version: String,
    #[serde(default)]
    pub prng: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family_policy: Option<String>,
    /// Per-interval AICc winners, counted over intervals fitted on their own data.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub family_selection: BTreeMap<Family, usize>,
    /// Intervals whose fit borrowed samples from a neighbour.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pooled_intervals: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

/// Model parameters of one interval `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmcInterval {
    pub index: usize,
    /// Samples of the trace that fell in this interval.
    pub sample_count: usize,
    pub snr_pdf: SnrPdf,
    pub family: FamilyParams,
    pub levels: LevelSet,
    pub matrix: TransitionMatrix,
    pub state_probs: Vec<f64>,
    /// Neighbouring interval whose samples were pooled in, for sparse intervals.
    pub pooled_from: Option<usize>,
}

impl FsmcInterval {
    pub fn n_states(&self) -> usize {
        self.levels.n_levels()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| e.in_interval(self.index);
        self.levels.validate().map_err(ctx)?;
        self.matrix.validate().map_err(ctx)?;
        self.family.validate().map_err(ctx)?;
        SnrPdf::new(self.snr_pdf.m, self.snr_pdf.mean).map_err(ctx)?;
        let n = self.levels.n_levels();
        if self.matrix.n_states() != n || self.state_probs.len() != n {
            return Err(Error::InvalidModel(format!(
                "{n} levels but a {}-state matrix and {} state probabilities",
                self.matrix.n_states(),
                self.state_probs.len()
            ))
            .in_interval(self.index));
        }
        if self.state_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidModel("state probability outside [0, 1]".into()).in_interval(self.index));
        }
        let sum: f64 = self.state_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("state probabilities sum to {sum}")).in_interval(self.index));
        }
        Ok(())
    }
}

/// A complete location-dependent model covering `[origin, origin + L·Δ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmcModel {
    pub interval_length: f64,
    pub origin: f64,
    pub n_states: usize,
    pub metadata: ModelMetadata,
    pub intervals: Vec<FsmcInterval>,
}

impl FsmcModel {
    pub fn validate(&self) -> Result<()> {
        IntervalPartition::new(self.interval_length, self.origin, self.intervals.len())?;
        if self.intervals.is_empty() {
            return Err(Error::InvalidModel("model has no intervals".into()));
        }
        if self.n_states == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        for (i, interval) in self.intervals.iter().enumerate() {
            if interval.index != i + 1 {
                return Err(Error::InvalidModel(format!(
                    "interval at position {} has index {}",
                    i + 1,
                    interval.index
                )));
            }
            if interval.n_states() != self.n_states {
                return Err(Error::InvalidModel(format!(
                    "interval {} has {} states, model declares {}",
                    interval.index,
                    interval.n_states(),
                    self.n_states
                )));
            }
            interval.validate()?;
        }
        Ok(())
    }

    pub fn layout(&self) -> IntervalPartition {
        IntervalPartition {
            interval_length: self.interval_length,
            origin: self.origin,
            count: self.intervals.len(),
        }
    }

    /// Coverage `[origin, origin + L·Δ]`.
    pub fn coverage(&self) -> (f64, f64) {
        (self.origin, self.layout().end())
    }

    /// Interval containing `distance`, if covered.
    pub fn interval_at(&self, distance: f64) -> Option<&FsmcInterval> {
        self.layout().index_of(distance).map(|l| &self.intervals[l - 1])
    }

    pub fn interval(&self, index: usize) -> Option<&FsmcInterval> {
        index.checked_sub(1).and_then(|i| self.intervals.get(i))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&ModelFile::from(self))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and validates a model file.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        let model = FsmcModel::try_from(file)?;
        model.validate()?;
        Ok(model)
    }

    /// Stable 64-bit FNV-1a digest of the serialized model, as hex.
    pub fn digest(&self) -> String {
        let json = self.to_json_string().unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    interval_length_m: f64,
    origin_m: f64,
    n_states: usize,
    metadata: ModelMetadata,
    intervals: Vec<IntervalRecord>,
}

#[derive(Serialize, Deserialize)]
struct IntervalRecord {
    index: usize,
    sample_count: usize,
    snr_pdf: SnrPdf,
    family: FamilyParams,
    thresholds: Vec<f64>,
    representatives: Vec<f64>,
    distortion: f64,
    state_probs: Vec<f64>,
    matrix: TransitionMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pooled_from: Option<usize>,
}

impl From<&FsmcModel> for ModelFile {
    fn from(m: &FsmcModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            interval_length_m: m.interval_length,
            origin_m: m.origin,
            n_states: m.n_states,
            metadata: m.metadata.clone(),
            intervals: m
                .intervals
                .iter()
                .map(|iv| IntervalRecord {
                    index: iv.index,
                    sample_count: iv.sample_count,
                    snr_pdf: iv.snr_pdf,
                    family: iv.family,
                    thresholds: iv.levels.thresholds().to_vec(),
                    representatives: iv.levels.representatives().to_vec(),
                    distortion: iv.levels.distortion(),
                    state_probs: iv.state_probs.clone(),
                    matrix: iv.matrix.clone(),
                    pooled_from: iv.pooled_from,
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for FsmcModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                f.format_version
            )));
        }
        let intervals = f
            .intervals
            .into_iter()
            .map(|r| {
                let levels = LevelSet::new(r.thresholds, r.representatives, r.distortion)
                    .map_err(|e| e.in_interval(r.index))?;
                Ok(FsmcInterval {
                    index: r.index,
                    sample_count: r.sample_count,
                    snr_pdf: r.snr_pdf,
                    family: r.family,
                    levels,
                    matrix: r.matrix,
                    state_probs: r.state_probs,
                    pooled_from: r.pooled_from,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FsmcModel {
            interval_length: f.interval_length_m,
            origin: f.origin_m,
            n_states: f.n_states,
            metadata: f.metadata,
            intervals,
        })
    }
}

enum SliceFit {
    Ready { pdf: SnrPdf, family: FamilyParams },
    Deficient,
}

fn fit_slice(slice: &IntervalSlice, policy: FamilyPolicy) -> Result<SliceFit> {
    if slice.len() < MIN_SLICE_SAMPLES {
        return Ok(SliceFit::Deficient);
    }
    let snr = slice.snr_values();
    let pdf = match snr_pdf(&snr) {
        Ok(pdf) => pdf,
        Err(Error::DegenerateSample { .. }) => return Ok(SliceFit::Deficient),
        Err(e) => return Err(e),
    };
    let amps = amplitudes(&snr)?;
    let fit = match policy {
        FamilyPolicy::Auto => select_model(&amps, &Family::ALL)?,
        FamilyPolicy::Fixed(family) => fit_family(family, &amps)?,
    };
    Ok(SliceFit::Ready {
        pdf,
        family: fit.params,
    })
}

/// Nearest interval (by index distance, lower index on ties) that is not deficient.
fn nearest_ready(ready: &[bool], from: usize) -> Option<usize> {
    (1..ready.len()).find_map(|d| {
        let below = from.checked_sub(d).filter(|&i| ready[i]);
        let above = Some(from + d).filter(|&i| i < ready.len() && ready[i]);
        below.or(above)
    })
}

/// Fits a location-dependent model to a trace.
///
/// Per interval: amplitude family selection, SNR density fit, Lloyd-Max
/// levels on `[min, max]` of the interval's SNR (unless the configuration
/// fixes a support), quantization to states, then transition counts and
/// occupancy. Transitions are only counted between samples of the same
/// interval. Intervals with fewer than [`MIN_SLICE_SAMPLES`] samples, or with
/// no SNR spread, borrow the samples of the nearest well-populated interval
/// and use the family that won most often elsewhere.
pub fn build_model(trace: &MeasurementTrace, cfg: &BuildConfig) -> Result<FsmcModel> {
    if cfg.n_states < 2 {
        return Err(Error::Domain(format!("need at least 2 states, got {}", cfg.n_states)));
    }
    cfg.quantizer.validate()?;
    let (_, slices) = partition(trace, cfg.interval_length, cfg.origin)?;

    let fits: Vec<SliceFit> = slices
        .par_iter()
        .map(|s| fit_slice(s, cfg.family).map_err(|e| e.in_interval(s.index)))
        .collect::<Result<_>>()?;
    let ready: Vec<bool> = fits.iter().map(|f| matches!(f, SliceFit::Ready { .. })).collect();
    if !ready.iter().any(|&r| r) {
        return Err(Error::AllIntervalsDeficient);
    }

    let mut selection: BTreeMap<Family, usize> = BTreeMap::new();
    for f in &fits {
        if let SliceFit::Ready { family, .. } = f {
            *selection.entry(family.family()).or_insert(0) += 1;
        }
    }
    let global_family = selection
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&f, _)| f)
        .expect("at least one interval is ready");

    let outcomes: Vec<(FsmcInterval, Option<String>)> = slices
        .par_iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (slice, fit))| {
            let pooled_from = if ready[i] { None } else { nearest_ready(&ready, i) };
            let donor = pooled_from.map(|j| &slices[j]);
            assemble_interval(slice, fit, donor, global_family, cfg).map_err(|e| e.in_interval(slice.index))
        })
        .collect::<Result<_>>()?;

    let mut metadata = ModelMetadata {
        carrier_frequency_hz: cfg.carrier_frequency_hz,
        source_trace: trace.metadata.get("source").cloned(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        prng: crate::simulate::PRNG_NAME.to_string(),
        family_policy: Some(cfg.family.to_string()),
        family_selection: selection,
        ..Default::default()
    };
    let mut intervals = Vec::with_capacity(outcomes.len());
    for (interval, warning) in outcomes {
        if interval.pooled_from.is_some() {
            metadata.pooled_intervals.push(interval.index);
        }
        if let Some(w) = warning {
            metadata.warnings.push(w);
        }
        intervals.push(interval);
    }
    let model = FsmcModel {
        interval_length: cfg.interval_length,
        origin: cfg.origin,
        n_states: cfg.n_states,
        metadata,
        intervals,
    };
    model.validate()?;
    Ok(model)
}

fn assemble_interval(
    slice: &IntervalSlice,
    fit: &SliceFit,
    donor: Option<&IntervalSlice>,
    global_family: Family,
    cfg: &BuildConfig,
) -> Result<(FsmcInterval, Option<String>)> {
    let runs: Vec<&[TraceSample]> = match donor {
        Some(d) => vec![&slice.samples, &d.samples],
        None => vec![&slice.samples],
    };
    let snr: Vec<f64> = runs.iter().flat_map(|r| r.iter().map(|s| s.snr)).collect();

    let (pdf, family) = match (fit, donor) {
        (SliceFit::Ready { pdf, family }, _) => (*pdf, *family),
        (SliceFit::Deficient, Some(_)) => {
            let pdf = snr_pdf(&snr)?;
            let family = fit_family(global_family, &amplitudes(&snr)?)?.params;
            (pdf, family)
        }
        (SliceFit::Deficient, None) => unreachable!("deficient interval without a donor"),
    };

    let support = cfg.quantizer.support.unwrap_or_else(|| {
        let lo = snr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = snr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let qcfg = QuantizerConfig {
        support: Some(support),
        ..cfg.quantizer
    };
    let run = lloyd_max(&pdf, cfg.n_states, &qcfg)?;
    let warning = (!run.converged).then(|| {
        format!(
            "interval {}: Lloyd-Max stopped after {} iterations without reaching tol {}",
            slice.index, run.iterations, qcfg.tol
        )
    });
    let levels = run.levels;

    let states: Vec<Vec<usize>> = runs
        .iter()
        .map(|r| r.iter().map(|s| quantize(s.snr, &levels)).collect())
        .collect();
    let state_runs: Vec<&[usize]> = states.iter().map(Vec::as_slice).collect();
    let matrix = estimate_from_runs(&state_runs, cfg.n_states)?;
    let state_probs = occupancy(&state_runs, cfg.n_states)?;

    Ok((
        FsmcInterval {
            index: slice.index,
            sample_count: slice.len(),
            snr_pdf: pdf,
            family,
            levels,
            matrix,
            state_probs,
            pooled_from: donor.map(|d| d.index),
        },
        warning,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_trace(n: usize, spacing: f64) -> MeasurementTrace {
        MeasurementTrace::from_pairs((0..n).map(|i| {
            let d = i as f64 * spacing;
            (d, 20.0 + 5.0 * ((i * 7919) % 97) as f64 / 97.0 + 3.0 * (d * 0.37).sin())
        }))
        .unwrap()
    }

    #[test]
    fn nearest_ready_prefers_lower_on_ties() {
        let ready = [true, false, true, false, false];
        assert_eq!(nearest_ready(&ready, 1), Some(0));
        assert_eq!(nearest_ready(&ready, 3), Some(2));
        assert_eq!(nearest_ready(&ready, 4), Some(2));
        assert_eq!(nearest_ready(&[false, false], 0), None);
    }

    #[test]
    fn sparse_intervals_are_pooled() {
        // 200 samples over [0, 20), nothing until one sample at 37
        let mut pairs: Vec<(f64, f64)> = ramp_trace(200, 0.1).samples().iter().map(|s| (s.distance, s.snr)).collect();
        pairs.push((37.0, 22.0));
        let trace = MeasurementTrace::from_pairs(pairs).unwrap();
        let model = build_model(&trace, &BuildConfig::new(10.0, 4)).unwrap();
        assert_eq!(model.intervals.len(), 4);
        assert_eq!(model.intervals[0].pooled_from, None);
        assert_eq!(model.intervals[2].pooled_from, Some(2));
        assert_eq!(model.intervals[3].pooled_from, Some(2));
        assert_eq!(model.intervals[2].sample_count, 0);
        assert_eq!(model.metadata.pooled_intervals, vec![3, 4]);
    }

    #[test]
    fn every_interval_deficient() {
        let trace = MeasurementTrace::from_pairs((0..30).map(|i| (i as f64, 25.0))).unwrap();
        assert!(matches!(
            build_model(&trace, &BuildConfig::new(10.0, 4)),
            Err(Error::AllIntervalsDeficient)
        ));
    }

    #[test]
    fn rejects_single_state() {
        assert!(build_model(&ramp_trace(50, 1.0), &BuildConfig::new(10.0, 1)).is_err());
    }

    #[test]
    fn non_positive_snr_names_the_interval() {
        let trace = MeasurementTrace::from_pairs((0..40).map(|i| (i as f64, if i == 25 { -1.0 } else { 10.0 + (i % 5) as f64 }))).unwrap();
        match build_model(&trace, &BuildConfig::new(10.0, 2)) {
            Err(Error::Interval { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let model = build_model(&ramp_trace(300, 0.5), &BuildConfig::new(25.0, 4)).unwrap();
        let json = model.to_json_string().unwrap();
        let back = FsmcModel::from_json_str(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json_string().unwrap(), json);
    }

    #[test]
    fn json_field_order() {
        let model = build_model(&ramp_trace(100, 0.5), &BuildConfig::new(50.0, 2)).unwrap();
        let json = model.to_json_string().unwrap();
        let keys = [
            "\"format_version\"",
            "\"interval_length_m\"",
            "\"origin_m\"",
            "\"n_states\"",
            "\"metadata\"",
            "\"intervals\"",
            "\"index\"",
            "\"sample_count\"",
            "\"snr_pdf\"",
            "\"mean_snr\"",
            "\"family\"",
            "\"thresholds\"",
            "\"representatives\"",
            "\"distortion\"",
            "\"state_probs\"",
            "\"matrix\"",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{json}");
    }

    #[test]
    fn invalid_model_files_are_rejected() {
        let model = build_model(&ramp_trace(100, 0.5), &BuildConfig::new(50.0, 2)).unwrap();
        let json = model.to_json_string().unwrap();
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(FsmcModel::from_json_str(&bumped).is_err());
        let reindexed = json.replacen("\"index\": 1", "\"index\": 4", 1);
        assert!(FsmcModel::from_json_str(&reindexed).is_err());
    }
}
