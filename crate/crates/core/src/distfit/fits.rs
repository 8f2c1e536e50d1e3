use super::snr::gamma_shape_mle;
use super::{Family, FamilyParams, FitResult};
use crate::error::{Error, Result};
use crate::special::{bessel_ratio_i1_i0, ln_bessel_i0, ln_gamma};

/// Iteration cap for the Rice likelihood search.
pub const RICE_MAX_ITER: usize = 200;
/// Parameter tolerance for the Rice likelihood search, relative to `√mean(x²)`.
pub const RICE_TOL: f64 = 1e-8;

const RICE_GRID: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn check_samples(family: Family, samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::Fit {
            family,
            message: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Fit {
            family,
            message: format!("samples must be positive and finite, found {bad}"),
        });
    }
    Ok(())
}

struct Moments {
    n: f64,
    sum_ln: f64,
    mean_sq: f64,
    mean_fourth: f64,
}

impl Moments {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let (mut sum_ln, mut sq, mut fourth) = (0.0, 0.0, 0.0);
        for &x in samples {
            let x2 = x * x;
            sum_ln += x.ln();
            sq += x2;
            fourth += x2 * x2;
        }
        Self {
            n,
            sum_ln,
            mean_sq: sq / n,
            mean_fourth: fourth / n,
        }
    }
}

fn rayleigh_loglik(m: &Moments, sigma_sq: f64) -> f64 {
    m.sum_ln - m.n * sigma_sq.ln() - m.n * m.mean_sq / (2.0 * sigma_sq)
}

/// Rayleigh MLE: `σ̂² = mean(x²) / 2`.
pub fn fit_rayleigh(samples: &[f64]) -> Result<FitResult> {
    check_samples(Family::Rayleigh, samples)?;
    let m = Moments::of(samples);
    let sigma_sq = m.mean_sq / 2.0;
    let loglik = rayleigh_loglik(&m, sigma_sq);
    Ok(FitResult::new(
        FamilyParams::Rayleigh {
            sigma: sigma_sq.sqrt(),
        },
        loglik,
        samples.len(),
    ))
}

fn rice_loglik(samples: &[f64], m: &Moments, nu: f64, sigma_sq: f64) -> f64 {
    let mut acc = 0.0;
    for &x in samples {
        acc += ln_bessel_i0(x * nu / sigma_sq);
    }
    m.sum_ln - m.n * sigma_sq.ln() - m.n * (m.mean_sq + nu * nu) / (2.0 * sigma_sq) + acc
}

/// Rice MLE.
///
/// At the optimum the second moment is matched exactly, `ν² + 2σ² = mean(x²)`,
/// so the likelihood is maximized along that curve: a grid scan (including
/// the moment estimate `ν₀⁴ = 2·mean(x²)² − mean(x⁴)`) brackets the peak and
/// golden-section search refines it. The `ν = 0` end of the curve is the
/// Rayleigh fit, so the Rice log-likelihood never falls below it.
pub fn fit_rice(samples: &[f64]) -> Result<FitResult> {
    check_samples(Family::Rice, samples)?;
    let m = Moments::of(samples);
    let scale = m.mean_sq.sqrt();
    let profile = |nu: f64| {
        let sigma_sq = (m.mean_sq - nu * nu) / 2.0;
        if sigma_sq <= 0.0 {
            f64::NEG_INFINITY
        } else {
            rice_loglik(samples, &m, nu, sigma_sq)
        }
    };

    let nu_moment = (2.0 * m.mean_sq * m.mean_sq - m.mean_fourth).max(0.0).powf(0.25);
    let step = scale / RICE_GRID as f64;
    let mut grid: Vec<(f64, f64)> = (1..RICE_GRID).map(|i| i as f64 * step).map(|nu| (nu, profile(nu))).collect();
    grid.push((0.0, rayleigh_loglik(&m, m.mean_sq / 2.0)));
    if nu_moment > 0.0 && nu_moment < scale {
        grid.push((nu_moment, profile(nu_moment)));
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best_idx, _) = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");

    let mut lo = if best_idx == 0 { 0.0 } else { grid[best_idx - 1].0 };
    let mut hi = grid.get(best_idx + 1).map_or(scale, |p| p.0);
    let tol = RICE_TOL * scale;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (profile(x1), profile(x2));
    let mut iterations = 0;
    while hi - lo > tol {
        iterations += 1;
        if iterations > RICE_MAX_ITER {
            return Err(Error::NonConvergence {
                family: Family::Rice,
                iterations: RICE_MAX_ITER,
                last_step: hi - lo,
            });
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = profile(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = profile(x1);
        }
    }

    let (mut nu, mut loglik) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for &(g_nu, g_ll) in &grid {
        if g_ll > loglik {
            nu = g_nu;
            loglik = g_ll;
        }
    }
    let sigma = ((m.mean_sq - nu * nu) / 2.0).sqrt();
    Ok(FitResult::new(FamilyParams::Rice { nu, sigma }, loglik, samples.len()))
}

/// Mean of `x · I1(xν/σ²)/I0(xν/σ²)`; exposed for stationarity checks in tests.
#[doc(hidden)]
pub fn rice_nu_update(samples: &[f64], nu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    samples.iter().map(|&x| x * bessel_ratio_i1_i0(x * nu / s2)).sum::<f64>() / samples.len() as f64
}

/// Nakagami MLE: `Ω̂ = mean(x²)`; `m̂` is the Gamma shape MLE of the powers `x²`.
pub fn fit_nakagami(samples: &[f64]) -> Result<FitResult> {
    check_samples(Family::Nakagami, samples)?;
    let powers: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let mom = Moments::of(samples);
    let omega = mom.mean_sq;
    let shape = gamma_shape_mle(&powers).map_err(|e| match e {
        Error::Fit { message, .. } => Error::Fit {
            family: Family::Nakagami,
            message,
        },
        Error::NonConvergence {
            iterations,
            last_step,
            ..
        } => Error::NonConvergence {
            family: Family::Nakagami,
            iterations,
            last_step,
        },
        other => other,
    })?;
    let n = mom.n;
    let loglik = n * (std::f64::consts::LN_2 + shape * shape.ln() - ln_gamma(shape) - shape * omega.ln())
        + (2.0 * shape - 1.0) * mom.sum_ln
        - shape * n * mom.mean_sq / omega;
    Ok(FitResult::new(
        FamilyParams::Nakagami { m: shape, omega },
        loglik,
        samples.len(),
    ))
}

pub fn fit_family(family: Family, samples: &[f64]) -> Result<FitResult> {
    match family {
        Family::Rayleigh => fit_rayleigh(samples),
        Family::Rice => fit_rice(samples),
        Family::Nakagami => fit_nakagami(samples),
    }
}
