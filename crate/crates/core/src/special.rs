//! Special functions needed by the likelihood fits and the quantizer.
//!
//! `ln_gamma` and `digamma` come from `statrs`; the regularized incomplete
//! gamma function, trigamma and the exponentially scaled Bessel functions are
//! implemented here because the fits need them at arguments (`a` up to ~500,
//! Bessel arguments well past the overflow point of `I0`) where we want
//! explicit control over convergence.

pub use statrs::function::gamma::{digamma, ln_gamma};

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Trigamma function ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    // recurrence ψ'(x) = ψ'(x + 1) + 1/x² until the asymptotic series is accurate
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + series
}

/// Regularized lower and upper incomplete gamma functions `(P(a, x), Q(a, x))`.
///
/// Series expansion below `x < a + 1`, Lentz continued fraction above; the
/// complement is formed from whichever side was computed directly so that
/// the small one of the pair keeps full relative precision.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    assert!(a > 0.0, "gamma_pq requires a > 0");
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let p = (log_prefactor.exp() * lower_series(a, x)).min(1.0);
        (p, 1.0 - p)
    } else {
        let q = (log_prefactor.exp() * upper_fraction(a, x)).min(1.0);
        (1.0 - q, q)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).0
}

/// `P(a, hi) - P(a, lo)` without catastrophic cancellation in either tail.
pub fn gamma_p_diff(a: f64, lo: f64, hi: f64) -> f64 {
    let (p_lo, q_lo) = gamma_pq(a, lo);
    let (p_hi, q_hi) = gamma_pq(a, hi);
    if q_lo < p_lo {
        (q_lo - q_hi).max(0.0)
    } else {
        (p_hi - p_lo).max(0.0)
    }
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

const BESSEL_SERIES_LIMIT: f64 = 30.0;

/// Exponentially scaled modified Bessel function `e^{-|x|} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    scaled_bessel(0, x.abs())
}

/// Exponentially scaled modified Bessel function `e^{-|x|} I1(x)`.
pub fn bessel_i1e(x: f64) -> f64 {
    let v = scaled_bessel(1, x.abs());
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// `ln I0(x)` for x ≥ 0, finite for arbitrarily large arguments.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    x + bessel_i0e(x).ln()
}

/// Ratio `I1(x) / I0(x)`.
pub fn bessel_ratio_i1_i0(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    bessel_i1e(x) / bessel_i0e(x)
}

fn scaled_bessel(order: u32, x: f64) -> f64 {
    if x <= BESSEL_SERIES_LIMIT {
        bessel_series(order, x)
    } else {
        // Hankel asymptotic expansion
        bessel_hankel(order, x)
    }
}

fn bessel_series(order: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    // power series Σ (x/2)^{2k+ν} / (k! (k+ν)!), all terms positive
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if order == 0 { 1.0 } else { half };
    let mut sum = term;
    let nu = order as f64;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term <= sum * EPS {
            break;
        }
    }
    sum * (-x).exp()
}

fn bessel_hankel(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (k * 8.0 * x);
        sum += term;
        if term.abs() < sum.abs() * EPS || k > 60.0 {
            break;
        }
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn trigamma_known_values() {
        // ψ'(1) = π²/6, ψ'(1/2) = π²/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!(close(trigamma(1.0), pi2 / 6.0, 1e-13));
        assert!(close(trigamma(0.5), pi2 / 2.0, 1e-13));
        assert!(close(trigamma(100.0), 0.010050166663333571, 1e-13));
    }

    #[test]
    fn gamma_p_closed_forms() {
        for &x in &[0.1, 1.5, 7.0, 40.0] {
            // P(1, x) = 1 - e^{-x}
            assert!(close(gamma_p(1.0, x), 1.0 - (-x).exp(), 1e-14));
            // P(2, x) = 1 - (1 + x) e^{-x}
            assert!(close(gamma_p(2.0, x), 1.0 - (1.0 + x) * (-x).exp(), 1e-14));
        }
        let (p, q) = gamma_pq(3.0, 0.0);
        assert_eq!((p, q), (0.0, 1.0));
    }

    #[test]
    fn gamma_p_large_shape_is_centered() {
        // P(a, a) → 1/2 as a grows (median ≈ a - 1/3)
        let p = gamma_p(500.0, 500.0 - 1.0 / 3.0);
        assert!((p - 0.5).abs() < 1e-3, "{p}");
        let (p, q) = gamma_pq(502.0, 5000.0);
        assert!(p == 1.0 && q < 1e-300);
    }

    #[test]
    fn tail_difference_keeps_precision() {
        // Q(1, x) = e^{-x}; difference far out in the tail
        let d = gamma_p_diff(1.0, 40.0, 41.0);
        let exact = (-40.0f64).exp() - (-41.0f64).exp();
        assert!(close(d, exact, 1e-10), "{d} vs {exact}");
    }

    #[test]
    fn bessel_values() {
        // I0(1) = 1.2660658777520082, I1(1) = 0.5651591039924851
        assert!(close(bessel_i0e(1.0) * 1f64.exp(), 1.2660658777520082, 1e-14));
        assert!(close(bessel_i1e(1.0) * 1f64.exp(), 0.5651591039924851, 1e-14));
        // I0(50) = 2.9325537838493355e20
        assert!(close(bessel_i0e(50.0) * 50f64.exp(), 2.932553783849336e20, 1e-12));
        assert_eq!(bessel_i0e(0.0), 1.0);
        assert_eq!(bessel_i1e(0.0), 0.0);
    }

    #[test]
    fn bessel_branches_agree_at_switch() {
        for order in [0, 1] {
            let x = BESSEL_SERIES_LIMIT;
            let (s, h) = (bessel_series(order, x), bessel_hankel(order, x));
            assert!((s - h).abs() <= 1e-14 * s, "order {order}: {s} vs {h}");
        }
    }

    #[test]
    fn ln_i0_large_argument() {
        // ln I0(x) ≈ x - ½ ln(2πx) for large x
        let x = 1e4;
        let approx = x - 0.5 * (2.0 * std::f64::consts::PI * x).ln();
        assert!((ln_bessel_i0(x) - approx).abs() < 1e-4);
    }
}
