//! Synthetic traces with known ground truth: a path-loss curve with fading,
//! or samples drawn from a known model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FsmcModel;
use crate::simulate::{simulate, Trajectory};
use crate::trace::{MeasurementTrace, TraceSample};

/// Mean SNR at a distance; linear between control points, flat beyond them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub distance_m: f64,
    pub mean_snr: f64,
}

/// Fading gain with unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Fading {
    None,
    Rayleigh,
    Rice { k_factor: f64 },
    Nakagami { m: f64 },
}

impl Fading {
    fn validate(&self) -> Result<()> {
        match *self {
            Fading::Rice { k_factor } if !(k_factor >= 0.0) || !k_factor.is_finite() => {
                Err(Error::Domain(format!("Rice K factor must be >= 0, got {k_factor}")))
            }
            Fading::Nakagami { m } if !(m >= 0.5) || !m.is_finite() => {
                Err(Error::Domain(format!("Nakagami m must be >= 0.5, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// Power gain `|h|²` with `E[|h|²] = 1`.
    fn gain(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Fading::None => 1.0,
            Fading::Rayleigh => Exp1.sample(rng),
            Fading::Rice { k_factor } => {
                let los = (k_factor / (k_factor + 1.0)).sqrt();
                let s = (0.5 / (k_factor + 1.0)).sqrt();
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                (los + s * re).powi(2) + (s * im).powi(2)
            }
            Fading::Nakagami { m } => Gamma::new(m, 1.0 / m).expect("validated shape").sample(rng),
        }
    }
}

/// How the fading gain combines with the mean SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// `snr = mean · g`, SNR in linear units.
    #[default]
    Multiplicative,
    /// `snr = mean + 10·log10(g)`, SNR in dB.
    AdditiveDb,
}

/// Fading override on `[start_m, end_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingSegment {
    pub start_m: f64,
    pub end_m: f64,
    pub fading: Fading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub path_loss: Vec<ControlPoint>,
    pub fading: Fading,
    #[serde(default)]
    pub mode: FadingMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<FadingSegment>,
    pub span_m: f64,
    pub sample_spacing_m: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.path_loss.is_empty() {
            return Err(Error::Domain("path loss curve needs at least one control point".into()));
        }
        if self.path_loss.iter().any(|p| !p.distance_m.is_finite() || !p.mean_snr.is_finite()) {
            return Err(Error::Domain("path loss control points must be finite".into()));
        }
        if self.path_loss.windows(2).any(|w| w[1].distance_m <= w[0].distance_m) {
            return Err(Error::Domain("path loss control points must be sorted by distance".into()));
        }
        if !(self.span_m > 0.0) || !self.span_m.is_finite() {
            return Err(Error::Domain(format!("span must be positive, got {}", self.span_m)));
        }
        if !(self.sample_spacing_m > 0.0) || !self.sample_spacing_m.is_finite() {
            return Err(Error::Domain(format!(
                "sample spacing must be positive, got {}",
                self.sample_spacing_m
            )));
        }
        self.fading.validate()?;
        for s in &self.segments {
            if !(s.start_m < s.end_m) {
                return Err(Error::Domain(format!("empty fading segment [{}, {})", s.start_m, s.end_m)));
            }
            s.fading.validate()?;
        }
        Ok(())
    }

    pub fn mean_snr(&self, distance: f64) -> f64 {
        let pts = &self.path_loss;
        let i = pts.partition_point(|p| p.distance_m <= distance);
        if i == 0 {
            return pts[0].mean_snr;
        }
        if i == pts.len() {
            return pts[i - 1].mean_snr;
        }
        let (a, b) = (pts[i - 1], pts[i]);
        let t = (distance - a.distance_m) / (b.distance_m - a.distance_m);
        a.mean_snr + t * (b.mean_snr - a.mean_snr)
    }

    /// Fading in effect at `distance`; the last matching segment wins.
    pub fn fading_at(&self, distance: f64) -> Fading {
        self.segments
            .iter()
            .rev()
            .find(|s| (s.start_m..s.end_m).contains(&distance))
            .map_or(self.fading, |s| s.fading)
    }

    /// Number of samples: positions `i·spacing` up to and including the span.
    pub fn sample_count(&self) -> usize {
        (self.span_m / self.sample_spacing_m + 1e-9).floor() as usize + 1
    }
}

/// Draws one fading gain per position `i·spacing` on `[0, span]`.
pub fn synth_trace(spec: &SynthSpec) -> Result<MeasurementTrace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = (0..spec.sample_count())
        .map(|i| {
            let d = i as f64 * spec.sample_spacing_m;
            let mean = spec.mean_snr(d);
            let g = spec.fading_at(d).gain(&mut rng);
            let snr = match spec.mode {
                FadingMode::Multiplicative => mean * g,
                FadingMode::AdditiveDb => mean + 10.0 * g.log10(),
            };
            TraceSample::new(d, snr)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trace = MeasurementTrace::new(samples)?;
    trace.metadata.insert("source".into(), format!("synth seed {}", spec.seed));
    Ok(trace)
}

/// Samples a trace from a model at spacing `Δ / samples_per_interval`, giving
/// exactly `L · samples_per_interval` representative-valued samples.
pub fn synth_from_model(model: &FsmcModel, samples_per_interval: usize, seed: u64) -> Result<MeasurementTrace> {
    if samples_per_interval == 0 {
        return Err(Error::Domain("samples per interval must be positive".into()));
    }
    let (start, _) = model.coverage();
    let step = model.interval_length / samples_per_interval as f64;
    let count = model.intervals.len() * samples_per_interval;
    // end is placed half a step past the last sample so rounding cannot add or drop one
    let traj = Trajectory::new(start, start + (count as f64 - 0.5) * step, step)?;
    let sim = simulate(model, &traj, seed)?;
    debug_assert_eq!(sim.samples.len(), count);
    let samples = sim
        .samples
        .iter()
        .map(|s| TraceSample::new(s.distance, s.snr))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = MeasurementTrace::new(samples)?;
    trace.metadata.insert("source".into(), format!("model {} seed {seed}", sim.model_id));
    Ok(trace)
}
