//! State sequences, tridiagonal transition matrices and their stationary laws.
//!
//! States are numbered `1..=N` everywhere in the public API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{quantize, LevelSet};
use crate::trace::IntervalSlice;

/// Row-sum tolerance for a stochastic row.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic `N × N` matrix with `p(n, j) = 0` whenever `|n − j| > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { rows };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if n == 0 {
            return Err(Error::InvalidModel("transition matrix is empty".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("row {} has {} entries, expected {n}", i + 1, row.len())));
            }
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!("p({},{}) = {p} is not a probability", i + 1, j + 1)));
                }
                if i.abs_diff(j) > 1 && p != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "p({},{}) = {p} breaks the adjacent-state structure",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    /// `p(from → to)` for 1-based states; zero outside `1..=N`.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        if from == 0 || to == 0 || from > self.rows.len() || to > self.rows.len() {
            return 0.0;
        }
        self.rows[from - 1][to - 1]
    }

    /// Row of a 1-based state.
    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `(p(k,k−1), p(k,k), p(k,k+1))`, with `None` for neighbours outside `1..=N`.
    pub fn band(&self, state: usize) -> (Option<f64>, f64, Option<f64>) {
        let n = self.n_states();
        let prev = (state > 1).then(|| self.get(state, state - 1));
        let next = (state < n).then(|| self.get(state, state + 1));
        (prev, self.get(state, state), next)
    }
}

/// Observed states of one interval, in step order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence {
    pub interval: usize,
    pub states: Vec<usize>,
}

impl StateSequence {
    pub fn new(interval: usize, states: Vec<usize>, n_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptySlice { index: interval });
        }
        if let Some(&bad) = states.iter().find(|&&s| s == 0 || s > n_states) {
            return Err(Error::Domain(format!("state {bad} outside 1..={n_states}")));
        }
        Ok(Self { interval, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Quantizes every SNR sample of a slice under `levels`.
pub fn to_states(slice: &IntervalSlice, levels: &LevelSet) -> Result<StateSequence> {
    if slice.is_empty() {
        return Err(Error::EmptySlice { index: slice.index });
    }
    let states = slice.samples.iter().map(|s| quantize(s.snr, levels)).collect();
    Ok(StateSequence {
        interval: slice.index,
        states,
    })
}

/// Consecutive-pair counts with jumps longer than one state folded onto the
/// adjacent state in the jump direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    counts: Vec<Vec<u64>>,
    /// Pairs whose jump was longer than one state.
    pub clamped: u64,
}

impl TransitionCounts {
    pub fn new(n_states: usize) -> Self {
        Self {
            counts: vec![vec![0; n_states]; n_states],
            clamped: 0,
        }
    }

    /// Adds every consecutive pair of one run of 1-based states.
    pub fn add_run(&mut self, states: &[usize]) {
        for pair in states.windows(2) {
            let (from, to) = (pair[0] - 1, pair[1] - 1);
            let to = if to > from + 1 {
                self.clamped += 1;
                from + 1
            } else if from > to + 1 {
                self.clamped += 1;
                from - 1
            } else {
                to
            };
            self.counts[from][to] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Count of `from → to` for 1-based states.
    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from - 1][to - 1]
    }

    pub fn row_total(&self, state: usize) -> u64 {
        self.counts[state - 1].iter().sum()
    }

    /// Row-normalized matrix; rows without observations become self-loops.
    pub fn to_matrix(&self) -> TransitionMatrix {
        let n = self.counts.len();
        let rows = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect();
        TransitionMatrix { rows }
    }
}

/// Maximum-likelihood tridiagonal transition matrix of a state sequence.
pub fn estimate_matrix(seq: &StateSequence, n_states: usize) -> Result<TransitionMatrix> {
    estimate_from_runs(&[seq.states.as_slice()], n_states)
}

/// Like [`estimate_matrix`], pooling several runs without linking their ends.
pub fn estimate_from_runs(runs: &[&[usize]], n_states: usize) -> Result<TransitionMatrix> {
    let pairs: usize = runs.iter().map(|r| r.len().saturating_sub(1)).sum();
    if pairs == 0 {
        return Err(Error::InsufficientData { needed: 2, got: runs.iter().map(|r| r.len()).max().unwrap_or(0) });
    }
    let mut counts = TransitionCounts::new(n_states);
    for run in runs {
        check_range(run, n_states)?;
        counts.add_run(run);
    }
    Ok(counts.to_matrix())
}

fn check_range(states: &[usize], n_states: usize) -> Result<()> {
    match states.iter().find(|&&s| s == 0 || s > n_states) {
        Some(bad) => Err(Error::Domain(format!("state {bad} outside 1..={n_states}"))),
        None => Ok(()),
    }
}

/// Empirical occupancy frequencies of states `1..=N`.
pub fn state_probabilities(seq: &StateSequence, n_states: usize) -> Result<Vec<f64>> {
    occupancy(&[seq.states.as_slice()], n_states)
}

pub(crate) fn occupancy(runs: &[&[usize]], n_states: usize) -> Result<Vec<f64>> {
    let total: usize = runs.iter().map(|r| r.len()).sum();
    if total == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut freq = vec![0.0; n_states];
    for run in runs {
        check_range(run, n_states)?;
        for &s in *run {
            freq[s - 1] += 1.0;
        }
    }
    freq.iter_mut().for_each(|f| *f /= total as f64);
    Ok(freq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub distribution: Vec<f64>,
    /// Set when some state cannot reach some other state; the distribution is
    /// then supported on the closed class reached from state 1.
    pub reducible: bool,
    /// `‖πP − π‖∞`.
    pub residual: f64,
}

/// Stationary distribution `π = πP` by a direct linear solve.
pub fn stationary_distribution(p: &TransitionMatrix) -> Stationary {
    let n = p.n_states();
    let reach = reachability(p);
    let reducible = (0..n).any(|i| (0..n).any(|j| !reach[i][j]));

    let class: Vec<usize> = if reducible {
        // first closed communicating class reachable from state 1
        let root = (0..n)
            .filter(|&s| reach[0][s])
            .find(|&s| (0..n).all(|t| !reach[s][t] || reach[t][s]))
            .expect("a finite chain always has a closed class");
        (0..n).filter(|&t| reach[root][t]).collect()
    } else {
        (0..n).collect()
    };

    let sub = solve_stationary(p, &class);
    let mut distribution = vec![0.0; n];
    for (&s, &v) in class.iter().zip(&sub) {
        distribution[s] = v;
    }
    let residual = stationary_residual(p, &distribution);
    Stationary {
        distribution,
        reducible,
        residual,
    }
}

pub fn stationary_residual(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = p.n_states();
    (0..n)
        .map(|j| {
            let flow: f64 = (0..n).map(|i| pi[i] * p.rows[i][j]).sum();
            (flow - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

fn reachability(p: &TransitionMatrix) -> Vec<Vec<bool>> {
    let n = p.n_states();
    (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if p.rows[i][j] > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect()
}

/// Solves `π (P_C − I) = 0`, `Σπ = 1` on the closed class `C`.
fn solve_stationary(p: &TransitionMatrix, class: &[usize]) -> Vec<f64> {
    let c = class.len();
    if c == 1 {
        return vec![1.0];
    }
    // rows of A are equations: A[j][i] = P[i][j] − δ_ij, last equation replaced by normalization
    let mut a = vec![vec![0.0; c + 1]; c];
    for (row, &j) in class.iter().enumerate().take(c - 1) {
        for (col, &i) in class.iter().enumerate() {
            a[row][col] = p.rows[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for col in 0..c {
        a[c - 1][col] = 1.0;
    }
    a[c - 1][c] = 1.0;

    let mut x = gauss_solve(a.clone());
    // one round of iterative refinement
    let r: Vec<f64> = a
        .iter()
        .map(|row| row[c] - (0..c).map(|k| row[k] * x[k]).sum::<f64>())
        .collect();
    let mut corr_sys = a;
    for (row, ri) in corr_sys.iter_mut().zip(&r) {
        row[c] = *ri;
    }
    let dx = gauss_solve(corr_sys);
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi = (*xi + d).max(0.0);
    }
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

/// Gaussian elimination with partial pivoting on an augmented `c × (c+1)` system.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let c = a.len();
    for col in 0..c {
        let pivot = (col..c)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        if d == 0.0 {
            continue;
        }
        for row in col + 1..c {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..=c {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; c];
    for row in (0..c).rev() {
        let s: f64 = (row + 1..c).map(|k| a[row][k] * x[k]).sum();
        x[row] = if a[row][row] == 0.0 { 0.0 } else { (a[row][c] - s) / a[row][row] };
    }
    x
}
