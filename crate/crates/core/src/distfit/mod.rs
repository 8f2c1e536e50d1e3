//! Fading-family fits, AICc model selection and the SNR density.
//!
//! Amplitude families (Rayleigh, Rice, Nakagami) are fitted by maximum
//! likelihood and ranked by AICc. Traces carry SNR, which is power-like, so
//! [`amplitudes`] maps SNR samples to amplitudes (`√snr`) before family
//! selection. The SNR density used by the quantizer is the Gamma form that a
//! Nakagami amplitude induces on power, see [`SnrPdf`].

mod fits;
mod snr;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::IntervalSlice;

pub use fits::{fit_family, fit_nakagami, fit_rayleigh, fit_rice, rice_nu_update, RICE_MAX_ITER, RICE_TOL};
pub use snr::{gamma_shape_mle, partial_moment, snr_pdf, SnrPdf, SHAPE_MAX, SHAPE_MIN};

/// Fewer samples than this in an interval and it is not fitted on its own.
pub const MIN_SLICE_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rayleigh,
    Rice,
    Nakagami,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Rayleigh, Family::Rice, Family::Nakagami];

    /// Number of free parameters.
    pub fn param_count(self) -> usize {
        match self {
            Family::Rayleigh => 1,
            Family::Rice | Family::Nakagami => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Rayleigh => "rayleigh",
            Family::Rice => "rice",
            Family::Nakagami => "nakagami",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Rayleigh => "Rayleigh",
            Family::Rice => "Rice",
            Family::Nakagami => "Nakagami",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rayleigh" => Ok(Family::Rayleigh),
            "rice" | "rician" => Ok(Family::Rice),
            "nakagami" => Ok(Family::Nakagami),
            other => Err(Error::Domain(format!("unknown family {other:?}"))),
        }
    }
}

/// Fitted parameters of one amplitude family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum FamilyParams {
    Rayleigh { sigma: f64 },
    Rice { nu: f64, sigma: f64 },
    Nakagami { m: f64, omega: f64 },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Rayleigh { .. } => Family::Rayleigh,
            FamilyParams::Rice { .. } => Family::Rice,
            FamilyParams::Nakagami { .. } => Family::Nakagami,
        }
    }

    pub fn param_count(&self) -> usize {
        self.family().param_count()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FamilyParams::Rayleigh { sigma } => sigma > 0.0 && sigma.is_finite(),
            FamilyParams::Rice { nu, sigma } => nu >= 0.0 && nu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            FamilyParams::Nakagami { m, omega } => m >= SHAPE_MIN && m.is_finite() && omega > 0.0 && omega.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("parameters out of domain: {self:?}")))
        }
    }
}

/// A maximum-likelihood fit with its information criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: FamilyParams,
    pub loglik: f64,
    pub n: usize,
    pub aic: f64,
    /// `None` when `n <= η + 1` and the small-sample correction is undefined.
    pub aicc: Option<f64>,
}

impl FitResult {
    pub(crate) fn new(params: FamilyParams, loglik: f64, n: usize) -> Self {
        let eta = params.param_count();
        let aic = -2.0 * loglik + 2.0 * eta as f64;
        let aicc = aicc_score(loglik, eta, n).ok().map(|(_, c)| c);
        Self {
            params,
            loglik,
            n,
            aic,
            aicc,
        }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

/// `(AIC, AICc)` for a maximized log-likelihood with `eta` parameters and `n` samples.
pub fn aicc_score(loglik: f64, eta: usize, n: usize) -> Result<(f64, f64)> {
    if n <= eta + 1 {
        return Err(Error::CorrectionUndefined { n, eta });
    }
    let k = eta as f64;
    let aic = -2.0 * loglik + 2.0 * k;
    let aicc = aic + 2.0 * k * (k + 1.0) / (n as f64 - k - 1.0);
    Ok((aic, aicc))
}

/// Lowest AICc wins; ties go to fewer parameters, then to the family order
/// Rayleigh < Rice < Nakagami. Fits without a defined AICc are ignored.
pub fn pick_best<'a>(fits: impl IntoIterator<Item = &'a FitResult>) -> Option<&'a FitResult> {
    fits.into_iter()
        .filter(|f| f.aicc.is_some_and(f64::is_finite))
        .min_by(|a, b| {
            a.aicc
                .unwrap()
                .total_cmp(&b.aicc.unwrap())
                .then(a.params.param_count().cmp(&b.params.param_count()))
                .then(a.family().cmp(&b.family()))
        })
}

/// Fits every candidate and returns the AICc winner.
pub fn select_model(samples: &[f64], candidates: &[Family]) -> Result<FitResult> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidate families given".into()));
    }
    let mut fits = Vec::with_capacity(candidates.len());
    let mut failures = Vec::new();
    for &family in candidates {
        match fit_family(family, samples) {
            Ok(fit) if fit.aicc.is_some() => fits.push(fit),
            Ok(fit) => failures.push((
                family,
                Error::CorrectionUndefined {
                    n: fit.n,
                    eta: family.param_count(),
                }
                .to_string(),
            )),
            Err(e) => failures.push((family, e.to_string())),
        }
    }
    pick_best(&fits).copied().ok_or(Error::Selection(failures))
}

/// Amplitudes `√snr` of SNR samples; SNR must be positive.
pub fn amplitudes(snr: &[f64]) -> Result<Vec<f64>> {
    snr.iter()
        .map(|&x| {
            if x > 0.0 && x.is_finite() {
                Ok(x.sqrt())
            } else {
                Err(Error::Domain(format!("SNR sample {x} is not positive")))
            }
        })
        .collect()
}

/// How often each family wins the per-interval AICc selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionHistogram {
    pub counts: BTreeMap<Family, usize>,
    /// Slices that could not be scored, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl SelectionHistogram {
    pub fn scored(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, family: Family) -> usize {
        self.counts.get(&family).copied().unwrap_or(0)
    }

    /// Family with the most wins (ties resolved by family order).
    pub fn plurality(&self) -> Option<Family> {
        self.counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&f, _)| f)
    }
}

/// Runs [`select_model`] on the amplitudes of every slice and tallies winners.
pub fn selection_histogram(slices: &[IntervalSlice], candidates: &[Family]) -> SelectionHistogram {
    let mut hist = SelectionHistogram::default();
    for &family in candidates {
        hist.counts.insert(family, 0);
    }
    for slice in slices {
        if slice.len() < MIN_SLICE_SAMPLES {
            hist.skipped.push((
                slice.index,
                format!("{} samples, need {MIN_SLICE_SAMPLES}", slice.len()),
            ));
            continue;
        }
        let outcome = amplitudes(&slice.snr_values()).and_then(|a| select_model(&a, candidates));
        match outcome {
            Ok(fit) => *hist.counts.entry(fit.family()).or_insert(0) += 1,
            Err(e) => hist.skipped.push((slice.index, e.to_string())),
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceSample;

    #[test]
    fn aicc_arithmetic() {
        let (aic, aicc) = aicc_score(-150.0, 2, 100).unwrap();
        assert_eq!(aic, 304.0);
        assert!((aicc - (304.0 + 12.0 / 97.0)).abs() < 1e-12);
        assert!((aicc - 304.1237).abs() < 1e-4);
        assert!(matches!(
            aicc_score(-150.0, 2, 3),
            Err(Error::CorrectionUndefined { n: 3, eta: 2 })
        ));
        let (aic, aicc) = aicc_score(-150.0, 2, 1_000_000_000).unwrap();
        assert!(aicc - aic < 1e-5 && aicc >= aic);
    }

    #[test]
    fn tie_breaks_toward_fewer_parameters() {
        let ray = FitResult {
            params: FamilyParams::Rayleigh { sigma: 1.0 },
            loglik: -10.0,
            n: 50,
            aic: 22.0,
            aicc: Some(22.0),
        };
        let nak = FitResult {
            params: FamilyParams::Nakagami { m: 1.0, omega: 2.0 },
            aicc: Some(22.0),
            ..ray
        };
        let rice = FitResult {
            params: FamilyParams::Rice { nu: 0.0, sigma: 1.0 },
            aicc: Some(22.0),
            ..ray
        };
        assert_eq!(pick_best([&nak, &rice, &ray]).unwrap().family(), Family::Rayleigh);
        assert_eq!(pick_best([&nak, &rice]).unwrap().family(), Family::Rice);
    }

    #[test]
    fn single_candidate_is_returned() {
        let samples: Vec<f64> = (1..40).map(|i| 0.5 + (i as f64 * 0.37).sin().abs()).collect();
        let fit = select_model(&samples, &[Family::Rayleigh]).unwrap();
        assert_eq!(fit.family(), Family::Rayleigh);
    }

    #[test]
    fn selection_reports_every_failure() {
        match select_model(&[1.0, -1.0], &Family::ALL) {
            Err(Error::Selection(failures)) => assert_eq!(failures.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn histogram_skips_small_slices() {
        let slice = |index, n: usize| IntervalSlice {
            index,
            samples: (0..n)
                .map(|i| TraceSample {
                    distance: i as f64,
                    snr: 1.0 + (i as f64 * 1.7).sin().abs() * 3.0,
                })
                .collect(),
        };
        let hist = selection_histogram(&[slice(1, 40), slice(2, 3), slice(3, 0)], &Family::ALL);
        assert_eq!(hist.scored(), 1);
        assert_eq!(hist.skipped.len(), 2);
    }

    #[test]
    fn family_parsing_and_serde() {
        assert_eq!("Nakagami".parse::<Family>().unwrap(), Family::Nakagami);
        assert!("lognormal".parse::<Family>().is_err());
        let json = serde_json::to_string(&FamilyParams::Rice { nu: 1.5, sigma: 0.5 }).unwrap();
        assert_eq!(json, r#"{"name":"rice","nu":1.5,"sigma":0.5}"#);
    }
}
