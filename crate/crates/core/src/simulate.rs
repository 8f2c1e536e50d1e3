//! Seeded simulation of an [`FsmcModel`] along a spatial trajectory.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::markov::{TransitionCounts, TransitionMatrix};
use crate::model::{FsmcModel, TOOLKIT_VERSION};
use crate::quantizer::quantize;

/// Name of the generator recorded in model and simulation metadata.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";
pub const SIM_HEADER: &str = "distance_m,state,snr";

/// Steps per interval used when no step is given.
pub const DEFAULT_STEPS_PER_INTERVAL: f64 = 50.0;

/// Positions `start + i·step` for every `i` with the position below `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Trajectory {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() || !(start < end) {
            return Err(Error::Domain(format!("trajectory needs start < end, got [{start}, {end}]")));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Domain(format!("trajectory step must be positive, got {step}")));
        }
        Ok(Self { start, end, step })
    }

    /// Trajectory over the whole model at the default step `Δ/50`.
    pub fn spanning(model: &FsmcModel) -> Self {
        let (start, end) = model.coverage();
        Self {
            start,
            end,
            step: model.interval_length / DEFAULT_STEPS_PER_INTERVAL,
        }
    }

    pub fn len(&self) -> usize {
        // the small slack keeps e.g. 500 / 0.1 from rounding up to an extra step
        (((self.end - self.start) / self.step) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSample {
    pub distance: f64,
    /// 1-based interval index at this position.
    pub interval: usize,
    pub state: usize,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub samples: Vec<SimSample>,
    pub seed: u64,
    /// Digest of the model that produced the trace.
    pub model_id: String,
}

impl SimulatedTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# model: {}", self.model_id)?;
        writeln!(out, "# prng: {PRNG_NAME}")?;
        writeln!(out, "# toolkit_version: {TOOLKIT_VERSION}")?;
        writeln!(out, "{SIM_HEADER}")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.distance, s.state, s.snr)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// `(distance, snr)` pairs.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.distance, s.snr)).collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from a probability vector; returns a 1-based index.
fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    let mut last_positive = 1;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i + 1;
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
    }
    last_positive
}

/// Runs the chain along `traj`.
///
/// The first state is drawn from the starting interval's state
/// probabilities. Each later step first maps the current state into the
/// interval at the new position (re-quantizing the current representative
/// when an interval boundary was crossed) and then draws the next state from
/// that interval's transition row. The emitted SNR is the representative of
/// the state.
pub fn simulate(model: &FsmcModel, traj: &Trajectory, seed: u64) -> Result<SimulatedTrace> {
    let layout = model.layout();
    let (lo, hi) = model.coverage();
    let slack = 1e-9 * (hi - lo).abs().max(1.0);
    if traj.start < lo - slack || traj.end > hi + slack {
        return Err(Error::Domain(format!(
            "trajectory [{}, {}] leaves model coverage [{lo}, {hi}]",
            traj.start, traj.end
        )));
    }
    let locate = |d: f64| layout.index_of(d.clamp(lo, hi)).expect("clamped into coverage");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = traj.len();
    let mut samples = Vec::with_capacity(count);

    let mut interval = locate(traj.start);
    let mut current = &model.intervals[interval - 1];
    let mut state = draw(&current.state_probs, &mut rng);
    samples.push(SimSample {
        distance: traj.start,
        interval,
        state,
        snr: current.levels.representative(state),
    });

    for i in 1..count {
        let distance = traj.position(i);
        let next_interval = locate(distance);
        if next_interval != interval {
            let snr = current.levels.representative(state);
            interval = next_interval;
            current = &model.intervals[interval - 1];
            state = quantize(snr, &current.levels);
        }
        state = draw(current.matrix.row(state), &mut rng);
        samples.push(SimSample {
            distance,
            interval,
            state,
            snr: current.levels.representative(state),
        });
    }

    Ok(SimulatedTrace {
        samples,
        seed,
        model_id: model.digest(),
    })
}

/// Occupancy and within-interval transition frequencies of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    pub index: usize,
    pub steps: usize,
    pub occupancy: Vec<f64>,
    pub counts: TransitionCounts,
    /// Row-normalized counts; rows never left from are self-loops.
    pub transitions: TransitionMatrix,
}

impl IntervalStats {
    /// Whether any transition out of `state` was observed.
    pub fn visited(&self, state: usize) -> bool {
        self.counts.row_total(state) > 0
    }
}

/// Per-interval statistics of a simulated trace, for intervals it visited.
pub fn empirical_stats(sim: &SimulatedTrace, model: &FsmcModel) -> Vec<IntervalStats> {
    let n = model.n_states;
    let mut out: Vec<IntervalStats> = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let mut occ = vec![0usize; n];
    let mut counts = TransitionCounts::new(n);
    let mut current: Option<usize> = None;

    let flush = |index: usize, occ: &mut Vec<usize>, counts: &mut TransitionCounts, out: &mut Vec<IntervalStats>| {
        let steps: usize = occ.iter().sum();
        if steps == 0 {
            return;
        }
        let occupancy = occ.iter().map(|&c| c as f64 / steps as f64).collect();
        let taken = std::mem::replace(counts, TransitionCounts::new(n));
        out.push(IntervalStats {
            index,
            steps,
            occupancy,
            transitions: taken.to_matrix(),
            counts: taken,
        });
        occ.iter_mut().for_each(|c| *c = 0);
    };

    // samples are ordered by distance, so each interval forms one contiguous run
    for s in &sim.samples {
        if current != Some(s.interval) {
            if let Some(prev) = current {
                counts.add_run(&run);
                flush(prev, &mut occ, &mut counts, &mut out);
            }
            run.clear();
            current = Some(s.interval);
        }
        run.push(s.state);
        occ[s.state - 1] += 1;
    }
    if let Some(prev) = current {
        counts.add_run(&run);
        flush(prev, &mut occ, &mut counts, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfit::{FamilyParams, SnrPdf};
    use crate::model::{FsmcInterval, ModelMetadata};
    use crate::quantizer::LevelSet;

    fn interval(index: usize, thresholds: Vec<f64>, matrix: TransitionMatrix, probs: Vec<f64>) -> FsmcInterval {
        let reps = thresholds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        FsmcInterval {
            index,
            sample_count: 100,
            snr_pdf: SnrPdf::new(2.0, 30.0).unwrap(),
            family: FamilyParams::Nakagami { m: 2.0, omega: 30.0 },
            levels: LevelSet::new(thresholds, reps, 1.0).unwrap(),
            matrix,
            state_probs: probs,
            pooled_from: None,
        }
    }

    fn model(intervals: Vec<FsmcInterval>, n: usize) -> FsmcModel {
        FsmcModel {
            interval_length: 10.0,
            origin: 0.0,
            n_states: n,
            metadata: ModelMetadata::default(),
            intervals,
        }
    }

    #[test]
    fn trajectory_length() {
        assert_eq!(Trajectory::new(0.0, 500.0, 0.1).unwrap().len(), 5000);
        assert_eq!(Trajectory::new(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert!(Trajectory::new(1.0, 1.0, 0.1).is_err());
        assert!(Trajectory::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_state_is_piecewise_constant() {
        let m = model(
            vec![
                interval(1, vec![0.0, 10.0], TransitionMatrix::identity(1), vec![1.0]),
                interval(2, vec![10.0, 30.0], TransitionMatrix::identity(1), vec![1.0]),
            ],
            1,
        );
        let sim = simulate(&m, &Trajectory::new(0.0, 20.0, 0.5).unwrap(), 3).unwrap();
        assert_eq!(sim.samples.len(), 40);
        for s in &sim.samples {
            assert_eq!(s.state, 1);
            assert_eq!(s.snr, if s.distance < 10.0 { 5.0 } else { 20.0 });
        }
        let stats = empirical_stats(&sim, &m);
        assert_eq!(stats.len(), 2);
        assert_eq!(stats[0].occupancy, vec![1.0]);
    }

    #[test]
    fn identity_rows_freeze_the_state_within_an_interval() {
        let t = vec![0.0, 10.0, 20.0, 30.0];
        let m = model(
            vec![
                interval(1, t.clone(), TransitionMatrix::identity(3), vec![0.0, 0.0, 1.0]),
                interval(2, vec![0.0, 1.0, 2.0, 30.0], TransitionMatrix::identity(3), vec![1.0, 0.0, 0.0]),
            ],
            3,
        );
        let sim = simulate(&m, &Trajectory::new(0.0, 20.0, 0.25).unwrap(), 11).unwrap();
        for s in &sim.samples {
            // state 3 (representative 25) re-quantizes to state 3 of interval 2
            assert_eq!(s.state, 3);
        }
        assert_eq!(sim.samples.last().unwrap().snr, 16.0);
    }

    #[test]
    fn coverage_is_enforced() {
        let m = model(vec![interval(1, vec![0.0, 1.0, 2.0], TransitionMatrix::identity(2), vec![0.5, 0.5])], 2);
        assert!(simulate(&m, &Trajectory::new(0.0, 10.5, 0.1).unwrap(), 1).is_err());
        assert!(simulate(&m, &Trajectory::new(-1.0, 5.0, 0.1).unwrap(), 1).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m = model(vec![interval(1, vec![0.0, 1.0, 2.0], p, vec![0.5, 0.5])], 2);
        let traj = Trajectory::new(0.0, 10.0, 0.01).unwrap();
        let a = simulate(&m, &traj, 9).unwrap().to_csv_string();
        let b = simulate(&m, &traj, 9).unwrap().to_csv_string();
        let c = simulate(&m, &traj, 10).unwrap().to_csv_string();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.contains("# seed: 9\n"));
    }

    #[test]
    fn length_one_trace_stats() {
        let m = model(vec![interval(1, vec![0.0, 1.0, 2.0], TransitionMatrix::identity(2), vec![0.0, 1.0])], 2);
        let sim = simulate(&m, &Trajectory::new(0.0, 0.05, 0.1).unwrap(), 1).unwrap();
        assert_eq!(sim.samples.len(), 1);
        let stats = empirical_stats(&sim, &m);
        assert_eq!(stats[0].occupancy, vec![0.0, 1.0]);
        assert_eq!(stats[0].counts.total(), 0);
    }
}
