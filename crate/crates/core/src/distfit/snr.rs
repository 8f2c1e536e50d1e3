use serde::{Deserialize, Serialize};

use super::Family;
use crate::error::{Error, Result};
use crate::special::{digamma, gamma_p_diff, ln_gamma, trigamma};

/// Lower clamp of the fading factor (Nakagami domain bound).
pub const SHAPE_MIN: f64 = 0.5;
/// Upper clamp of the fading factor, reached only by near-degenerate samples.
pub const SHAPE_MAX: f64 = 500.0;

const SHAPE_MAX_ITER: usize = 100;

/// SNR density with fading factor `m` and mean `x̄`:
///
/// `p(x) = mᵐ x^(m−1) / (x̄ᵐ Γ(m)) · exp(−m x / x̄)`, `x > 0`,
///
/// i.e. a Gamma density with shape `m` and scale `x̄/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPdf {
    pub m: f64,
    #[serde(rename = "mean_snr")]
    pub mean: f64,
}

impl SnrPdf {
    pub fn new(m: f64, mean: f64) -> Result<Self> {
        if !(m >= SHAPE_MIN) || !m.is_finite() {
            return Err(Error::Domain(format!("fading factor m must be >= {SHAPE_MIN}, got {m}")));
        }
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("mean SNR must be positive, got {mean}")));
        }
        Ok(Self { m, mean })
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let m = self.m;
        (m * (m / self.mean).ln() + (m - 1.0) * x.ln() - ln_gamma(m) - m * x / self.mean).exp()
    }

    /// `∫ₐᵇ xᵏ p(x) dx` for `k ∈ {0, 1, 2}`, via the regularized incomplete gamma function.
    pub fn moment(&self, a: f64, b: f64, order: u32) -> f64 {
        let m = self.m;
        let rate = m / self.mean;
        let a = a.max(0.0);
        let scale = match order {
            0 => 1.0,
            1 => self.mean,
            2 => self.mean * self.mean * (m + 1.0) / m,
            _ => panic!("moment order {order} not supported"),
        };
        scale * gamma_p_diff(m + order as f64, rate * a, rate * b)
    }
}

/// Partial moment `∫ₐᵇ xᵏ p(x) dx` (`k` = 0 or 1) of an SNR density.
pub fn partial_moment(pdf: &SnrPdf, a: f64, b: f64, order: u32) -> Result<f64> {
    if !(a >= 0.0) || !(a < b) {
        return Err(Error::Domain(format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    if order > 1 {
        return Err(Error::Domain(format!("partial moment order must be 0 or 1, got {order}")));
    }
    Ok(pdf.moment(a, b, order))
}

/// Gamma shape MLE for positive samples, clamped to `[SHAPE_MIN, SHAPE_MAX]`.
///
/// Solves `ln m − ψ(m) = ln(mean x) − mean(ln x)` by safeguarded Newton
/// iteration from the Minka starting point.
pub fn gamma_shape_mle(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Fit {
            family: Family::Nakagami,
            message: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Fit {
            family: Family::Nakagami,
            message: format!("samples must be positive and finite, found {bad}"),
        });
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(Error::DegenerateSample { count: samples.len() });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if !(s > 0.0) {
        return Err(Error::DegenerateSample { count: samples.len() });
    }

    let f = |m: f64| m.ln() - digamma(m) - s;
    if f(SHAPE_MAX) >= 0.0 {
        return Ok(SHAPE_MAX);
    }
    if f(SHAPE_MIN) <= 0.0 {
        return Ok(SHAPE_MIN);
    }

    // f is decreasing: keep a bracket [lo, hi] with f(lo) > 0 > f(hi)
    let (mut lo, mut hi) = (SHAPE_MIN, SHAPE_MAX);
    let mut m = ((3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s)).clamp(lo, hi);
    let mut last_step = f64::INFINITY;
    for _ in 0..SHAPE_MAX_ITER {
        let fm = f(m);
        if fm > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let deriv = 1.0 / m - trigamma(m);
        let mut next = m - fm / deriv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        last_step = (next - m).abs();
        m = next;
        if last_step <= 1e-12 * m {
            return Ok(m);
        }
    }
    Err(Error::NonConvergence {
        family: Family::Nakagami,
        iterations: SHAPE_MAX_ITER,
        last_step,
    })
}

/// Fits the SNR density to SNR samples: `x̄` is the sample mean and `m` the
/// Gamma shape MLE.
pub fn snr_pdf(snr_samples: &[f64]) -> Result<SnrPdf> {
    let m = gamma_shape_mle(snr_samples)?;
    let mean = snr_samples.iter().sum::<f64>() / snr_samples.len() as f64;
    SnrPdf::new(m, mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_shape_is_exponential() {
        let pdf = SnrPdf::new(1.0, 4.0).unwrap();
        for x in [0.1, 1.0, 7.5, 30.0] {
            let exp = (1.0 / 4.0) * (-x / 4.0f64).exp();
            assert!((pdf.density(x) - exp).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_and_mean() {
        for (m, mean) in [(0.5, 3.0), (1.0, 10.0), (2.0, 30.0), (37.0, 42.0), (500.0, 25.0)] {
            let pdf = SnrPdf::new(m, mean).unwrap();
            let mass = partial_moment(&pdf, 0.0, 50.0 * mean, 0).unwrap();
            assert!((1.0 - 1e-6..=1.0).contains(&mass), "m={m}: {mass}");
            let first = partial_moment(&pdf, 0.0, f64::INFINITY, 1).unwrap();
            assert!((first - mean).abs() < 1e-6 * mean.max(1.0), "m={m}: {first}");
            let second = pdf.moment(0.0, f64::INFINITY, 2);
            assert!((second - mean * mean * (1.0 + 1.0 / m)).abs() < 1e-9 * mean * mean);
        }
    }

    #[test]
    fn partial_moment_domain() {
        let pdf = SnrPdf::new(2.0, 30.0).unwrap();
        assert!(partial_moment(&pdf, 5.0, 5.0, 0).is_err());
        assert!(partial_moment(&pdf, 6.0, 5.0, 0).is_err());
        assert!(partial_moment(&pdf, -1.0, 5.0, 0).is_err());
    }

    #[test]
    fn snr_pdf_degenerate_and_small() {
        assert!(matches!(snr_pdf(&[5.0; 4]), Err(Error::DegenerateSample { .. })));
        assert!(snr_pdf(&[5.0]).is_err());
        assert!(snr_pdf(&[5.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn nearly_constant_samples_hit_the_cap() {
        let xs: Vec<f64> = (0..50).map(|i| 30.0 + 1e-6 * (i % 3) as f64).collect();
        assert_eq!(gamma_shape_mle(&xs).unwrap(), SHAPE_MAX);
    }

    #[test]
    fn shape_solves_the_likelihood_equation() {
        let xs: Vec<f64> = (1..200).map(|i| 1.0 + ((i * 37) % 101) as f64 / 7.0).collect();
        let m = gamma_shape_mle(&xs).unwrap();
        let n = xs.len() as f64;
        let s = (xs.iter().sum::<f64>() / n).ln() - xs.iter().map(|x| x.ln()).sum::<f64>() / n;
        assert!((m.ln() - digamma(m) - s).abs() < 1e-12);
    }
}
