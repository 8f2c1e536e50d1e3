//! Location-dependent finite-state Markov channel (FSMC) models.
//!
//! A distance-stamped SNR trace is cut into intervals of length `Δ`. In each
//! interval the SNR density is fitted, quantized into `N` states with a
//! Lloyd-Max quantizer, and a tridiagonal transition matrix is estimated from
//! the resulting state sequence. The model can then be simulated along a
//! trajectory and scored against held-out measurements.
//!
//! ```
//! use fsmc::{build_model, simulate, BuildConfig, Trajectory};
//! use fsmc::synth::{synth_trace, ControlPoint, Fading, FadingMode, SynthSpec};
//!
//! let spec = SynthSpec {
//!     path_loss: vec![
//!         ControlPoint { distance_m: 0.0, mean_snr: 45.0 },
//!         ControlPoint { distance_m: 100.0, mean_snr: 30.0 },
//!     ],
//!     fading: Fading::Nakagami { m: 2.0 },
//!     mode: FadingMode::Multiplicative,
//!     segments: vec![],
//!     span_m: 100.0,
//!     sample_spacing_m: 0.1,
//!     seed: 7,
//! };
//! let trace = synth_trace(&spec)?;
//! let model = build_model(&trace, &BuildConfig::new(5.0, 4))?;
//! assert_eq!(model.intervals.len(), 20);
//!
//! let sim = simulate(&model, &Trajectory::new(0.0, 100.0, 0.1)?, 1)?;
//! assert_eq!(sim.samples.len(), 1000);
//! # Ok::<(), fsmc::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distfit;
pub mod error;
pub mod evaluate;
pub mod markov;
pub mod model;
pub mod quantizer;
pub mod simulate;
pub mod special;
pub mod synth;
pub mod trace;

pub use distfit::{select_model, Family, FamilyParams, FitResult, SnrPdf};
pub use error::{Error, Result};
pub use evaluate::{compare_matrices, mse_trace, render_report, sweep, EvaluationReport, ReportFormat};
pub use markov::{estimate_matrix, stationary_distribution, TransitionMatrix};
pub use model::{build_model, BuildConfig, FamilyPolicy, FsmcInterval, FsmcModel};
pub use quantizer::{lloyd_max, quantize, LevelSet, QuantizerConfig};
pub use simulate::{simulate, SimulatedTrace, Trajectory};
pub use trace::{load_trace, partition, MeasurementTrace, TraceFormat, TraceSample};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/traces.md")]
    mod traces {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/quantizer.md")]
    mod quantizer {}
    #[doc = include_str!("../../../book/src/markov.md")]
    mod markov {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
