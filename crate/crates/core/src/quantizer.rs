//! Lloyd-Max design of non-uniform SNR levels.
//!
//! Given a density on a support `[a, b]` and a level count `N`, the quantizer
//! alternates two conditions until the interior thresholds stop moving:
//!
//! * every representative is the conditional mean (centroid) of its cell;
//! * every interior threshold is the midpoint of its neighbouring representatives.
//!
//! The outer thresholds stay pinned to the support endpoints. Each half-step
//! can only lower the mean squared error, so the distortion history of a run
//! is non-increasing.

use serde::{Deserialize, Serialize};

use crate::distfit::SnrPdf;
use crate::error::{Error, Result};

/// Cells lighter than this (relative to the support mass) are rejected.
pub const MIN_CELL_MASS: f64 = 1e-12;
/// Minimum density mass that must fall inside the support.
pub const MIN_SUPPORT_MASS: f64 = 1e-6;

/// A density the quantizer can integrate over cells.
pub trait Density {
    /// `∫ₐᵇ xᵏ p(x) dx` for `k ∈ {0, 1, 2}`.
    fn moment(&self, a: f64, b: f64, order: u32) -> f64;

    /// Support used when the configuration does not name one.
    fn natural_support(&self) -> (f64, f64);
}

impl Density for SnrPdf {
    fn moment(&self, a: f64, b: f64, order: u32) -> f64 {
        SnrPdf::moment(self, a, b, order)
    }

    fn natural_support(&self) -> (f64, f64) {
        (0.0, 50.0 * self.mean)
    }
}

/// Uniform density on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDensity {
    pub lo: f64,
    pub hi: f64,
}

impl Density for UniformDensity {
    fn moment(&self, a: f64, b: f64, order: u32) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a {
            return 0.0;
        }
        let k = order as i32 + 1;
        (b.powi(k) - a.powi(k)) / (k as f64 * (self.hi - self.lo))
    }

    fn natural_support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    /// Stop once no threshold moves by more than this (SNR units).
    pub tol: f64,
    pub max_iter: usize,
    /// Quantizer support `[a, b]`; `None` means "derive it" (from the samples
    /// when building a model, from the density otherwise).
    pub support: Option<(f64, f64)>,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            support: None,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        if let Some((a, b)) = self.support {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Domain(format!("support [{a}, {b}] is not an interval")));
            }
        }
        Ok(())
    }
}

/// Thresholds `Γ₁ < … < Γ_{N+1}`, representatives `x̃₁..x̃_N` and distortion `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    thresholds: Vec<f64>,
    representatives: Vec<f64>,
    distortion: f64,
}

impl LevelSet {
    pub fn new(thresholds: Vec<f64>, representatives: Vec<f64>, distortion: f64) -> Result<Self> {
        let levels = Self {
            thresholds,
            representatives,
            distortion,
        };
        levels.validate()?;
        Ok(levels)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.representatives.len();
        if n == 0 {
            return Err(Error::InvalidModel("level set needs at least one level".into()));
        }
        if self.thresholds.len() != n + 1 {
            return Err(Error::InvalidModel(format!(
                "{} thresholds for {n} levels (expected {})",
                self.thresholds.len(),
                n + 1
            )));
        }
        if self.thresholds.iter().chain(&self.representatives).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite threshold or representative".into()));
        }
        for (k, rep) in self.representatives.iter().enumerate() {
            let (lo, hi) = (self.thresholds[k], self.thresholds[k + 1]);
            if !(lo < hi) {
                return Err(Error::InvalidModel(format!("thresholds not strictly increasing at level {}", k + 1)));
            }
            if !(lo < *rep && *rep < hi) {
                return Err(Error::InvalidModel(format!(
                    "representative {rep} of level {} lies outside ({lo}, {hi})",
                    k + 1
                )));
            }
        }
        if !(self.distortion >= 0.0) {
            return Err(Error::InvalidModel(format!("negative distortion {}", self.distortion)));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.representatives.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn representatives(&self) -> &[f64] {
        &self.representatives
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn support(&self) -> (f64, f64) {
        (self.thresholds[0], self.thresholds[self.thresholds.len() - 1])
    }

    /// Representative of a 1-based state.
    pub fn representative(&self, state: usize) -> f64 {
        self.representatives[state - 1]
    }
}

/// Outcome of one Lloyd-Max run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydMaxRun {
    pub levels: LevelSet,
    pub iterations: usize,
    /// `false` when `max_iter` ran out before the thresholds settled.
    pub converged: bool,
    /// Distortion after each centroid update, first entry from the initial thresholds.
    pub distortion_history: Vec<f64>,
}

/// Designs `n_levels` Lloyd-Max levels for `pdf`, starting from equiprobable thresholds.
pub fn lloyd_max<D: Density + ?Sized>(pdf: &D, n_levels: usize, cfg: &QuantizerConfig) -> Result<LloydMaxRun> {
    cfg.validate()?;
    if n_levels == 0 {
        return Err(Error::Domain("need at least one level".into()));
    }
    let (a, b) = cfg.support.unwrap_or_else(|| pdf.natural_support());
    let total = support_mass(pdf, a, b)?;
    let thresholds = equiprobable_thresholds(pdf, a, b, total, n_levels);
    iterate(pdf, thresholds, total, cfg)
}

/// Runs Lloyd-Max from caller-supplied thresholds (outer values define the support).
pub fn lloyd_max_from<D: Density + ?Sized>(pdf: &D, initial: &[f64], cfg: &QuantizerConfig) -> Result<LloydMaxRun> {
    cfg.validate()?;
    if initial.len() < 2 || initial.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("initial thresholds must be strictly increasing, at least two".into()));
    }
    let total = support_mass(pdf, initial[0], initial[initial.len() - 1])?;
    iterate(pdf, initial.to_vec(), total, cfg)
}

fn support_mass<D: Density + ?Sized>(pdf: &D, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::Domain(format!("support [{a}, {b}] is empty")));
    }
    let total = pdf.moment(a, b, 0);
    if !(total > MIN_SUPPORT_MASS) {
        return Err(Error::Domain(format!(
            "density mass {total:e} on [{a}, {b}] is below {MIN_SUPPORT_MASS:e}"
        )));
    }
    Ok(total)
}

fn equiprobable_thresholds<D: Density + ?Sized>(pdf: &D, a: f64, b: f64, total: f64, n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(a);
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        let (mut lo, mut hi) = (*t.last().unwrap(), b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pdf.moment(a, mid, 0) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (b - a) {
                break;
            }
        }
        t.push(0.5 * (lo + hi));
    }
    t.push(b);
    t
}

struct CellStats {
    mass: f64,
    first: f64,
    second: f64,
}

fn cell_stats<D: Density + ?Sized>(pdf: &D, lo: f64, hi: f64) -> CellStats {
    CellStats {
        mass: pdf.moment(lo, hi, 0),
        first: pdf.moment(lo, hi, 1),
        second: pdf.moment(lo, hi, 2),
    }
}

fn centroids<D: Density + ?Sized>(pdf: &D, thresholds: &[f64], total: f64) -> Result<(Vec<f64>, f64)> {
    let mut reps = Vec::with_capacity(thresholds.len() - 1);
    let mut distortion = 0.0;
    for (k, w) in thresholds.windows(2).enumerate() {
        let s = cell_stats(pdf, w[0], w[1]);
        if !(s.mass >= MIN_CELL_MASS * total) {
            return Err(Error::DegenerateCell {
                cell: k + 1,
                mass: s.mass / total,
            });
        }
        let c = (s.first / s.mass).clamp(w[0], w[1]);
        reps.push(c);
        distortion += cell_cost(&s, c);
    }
    Ok((reps, distortion / total))
}

/// `∫ (x̃ − x)² p(x) dx` over one cell, written around the cell centroid.
fn cell_cost(s: &CellStats, rep: f64) -> f64 {
    let centroid = s.first / s.mass;
    let spread = (s.second - s.first * centroid).max(0.0);
    spread + s.mass * (rep - centroid).powi(2)
}

fn iterate<D: Density + ?Sized>(pdf: &D, mut thresholds: Vec<f64>, total: f64, cfg: &QuantizerConfig) -> Result<LloydMaxRun> {
    let (mut reps, mut distortion) = centroids(pdf, &thresholds, total)?;
    let mut history = vec![distortion];
    let mut converged = thresholds.len() <= 2;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let mut movement: f64 = 0.0;
        for k in 1..thresholds.len() - 1 {
            let mid = 0.5 * (reps[k - 1] + reps[k]);
            movement = movement.max((mid - thresholds[k]).abs());
            thresholds[k] = mid;
        }
        (reps, distortion) = centroids(pdf, &thresholds, total)?;
        history.push(distortion);
        converged = movement < cfg.tol;
    }
    Ok(LloydMaxRun {
        levels: LevelSet {
            thresholds,
            representatives: reps,
            distortion,
        },
        iterations,
        converged,
        distortion_history: history,
    })
}

/// Mean squared quantization error of `levels` under `pdf`, renormalized to the level support.
pub fn distortion<D: Density + ?Sized>(pdf: &D, levels: &LevelSet) -> f64 {
    let (a, b) = levels.support();
    let total = pdf.moment(a, b, 0);
    let sum: f64 = levels
        .thresholds
        .windows(2)
        .zip(&levels.representatives)
        .map(|(w, &rep)| {
            let s = cell_stats(pdf, w[0], w[1]);
            if s.mass > 0.0 {
                cell_cost(&s, rep)
            } else {
                0.0
            }
        })
        .sum();
    sum / total
}

/// 1-based state of `x`: `Γ_n ≤ x < Γ_{n+1}`, clamped to `1..=N` outside the support.
pub fn quantize(x: f64, levels: &LevelSet) -> usize {
    let n = levels.n_levels();
    let interior = &levels.thresholds[1..n];
    1 + interior.partition_point(|&t| t <= x)
}
