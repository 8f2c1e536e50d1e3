//! Command-line front end: `fit`, `inspect`, `simulate`, `evaluate`, `sweep`, `synth`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fsmc::evaluate::{
    compare_matrices, mse_trace, profile_csv, render_report, sweep, sweep_csv, EvaluationReport, ReportFormat,
    SweepConfig,
};
use fsmc::model::{build_model, BuildConfig, FamilyPolicy, FsmcModel};
use fsmc::quantizer::QuantizerConfig;
use fsmc::simulate::{simulate, Trajectory};
use fsmc::synth::{synth_from_model, synth_trace, SynthSpec};
use fsmc::trace::{interval_length_from_wavelengths, load_trace, partition, MeasurementTrace, TraceFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "fsmc", version, about = "Location-dependent finite-state Markov channel models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a distance-stamped SNR trace.
    Fit(FitArgs),
    /// Print the levels of the interval containing a position.
    Inspect(InspectArgs),
    /// Simulate a model along a trajectory.
    Simulate(SimulateArgs),
    /// Score a model against a held-out trace.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of interval lengths and state counts.
    Sweep(SweepArgs),
    /// Generate a synthetic trace from a spec or from a model.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IntervalArgs {
    /// Interval length in meters.
    #[arg(long, conflicts_with = "interval_wavelengths")]
    interval_m: Option<f64>,
    /// Interval length in carrier wavelengths (needs --freq-hz).
    #[arg(long, requires = "freq_hz")]
    interval_wavelengths: Option<f64>,
    /// Carrier frequency in Hz.
    #[arg(long)]
    freq_hz: Option<f64>,
}

impl IntervalArgs {
    fn resolve(&self) -> Result<f64, Failure> {
        match (self.interval_m, self.interval_wavelengths, self.freq_hz) {
            (Some(d), None, _) => Ok(d),
            (None, Some(w), Some(f)) => Ok(interval_length_from_wavelengths(w, f)?),
            _ => Err(Failure::Usage(
                "give --interval-m, or --interval-wavelengths with --freq-hz".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Number of SNR states per interval.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    states: u64,
    /// Amplitude family: auto, rayleigh, rice or nakagami.
    #[arg(long, default_value = "auto")]
    family: String,
    /// Lloyd-Max relative convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Lloyd-Max iteration cap.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Position of the first interval boundary in meters.
    #[arg(long, default_value_t = 0.0)]
    origin_m: f64,
}

impl ModelArgs {
    fn build_config(&self, interval_length: f64, carrier: Option<f64>) -> Result<BuildConfig, Failure> {
        let family: FamilyPolicy = self.family.parse().map_err(|_| {
            Failure::Usage(format!(
                "unknown family {:?} (expected auto, rayleigh, rice or nakagami)",
                self.family
            ))
        })?;
        let quantizer = QuantizerConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            support: None,
        };
        quantizer.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        if !(interval_length > 0.0) || !interval_length.is_finite() {
            return Err(Failure::Usage(format!("interval length must be positive, got {interval_length}")));
        }
        Ok(BuildConfig {
            interval_length,
            origin: self.origin_m,
            n_states: self.states as usize,
            quantizer,
            family,
            carrier_frequency_hz: carrier,
        })
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Trace CSV (`distance_m,snr`).
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    interval: IntervalArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output model JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Model JSON.
    model: PathBuf,
    /// Position in meters.
    #[arg(long)]
    at_m: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Model JSON.
    model: PathBuf,
    /// Start position in meters; defaults to the model origin.
    #[arg(long)]
    start: Option<f64>,
    /// End position in meters (exclusive); defaults to the end of the model.
    #[arg(long)]
    end: Option<f64>,
    /// Step in meters; defaults to the interval length / 50.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Model JSON.
    model: PathBuf,
    /// Held-out trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Simulation step in meters; defaults to the interval length / 50.
    #[arg(long)]
    step: Option<f64>,
    /// MSE bin width in meters; defaults to the simulation step.
    #[arg(long)]
    bin_m: Option<f64>,
    /// Also compare transition matrices in the interval containing this position.
    #[arg(long)]
    at_m: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report format: json or text.
    #[arg(long, default_value = "json")]
    format: String,
    /// Output report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `distance_m,measured_snr,simulated_snr` plot data here.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Trace used for fitting.
    #[arg(long)]
    trace: PathBuf,
    /// Held-out trace used for scoring.
    #[arg(long)]
    holdout: PathBuf,
    /// Interval lengths in meters, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100")]
    interval_m: Vec<f64>,
    /// State counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8")]
    states: Vec<usize>,
    /// Amplitude family: auto, rayleigh, rice or nakagami.
    #[arg(long, default_value = "auto")]
    family: String,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.0)]
    origin_m: f64,
    /// Simulation step in meters; defaults to each interval length / 50.
    #[arg(long)]
    step: Option<f64>,
    /// MSE bin width in meters, shared by all cells; defaults to each cell's step.
    #[arg(long)]
    bin_m: Option<f64>,
    /// Base seed; each cell derives its own seed from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Report format: json or text.
    #[arg(long, default_value = "json")]
    format: String,
    /// Output report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `interval_m,n_states,mse` plot data here.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic trace spec (JSON).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    spec: Option<PathBuf>,
    /// Sample a trace from this model instead.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Samples per interval when sampling from a model.
    #[arg(long, default_value_t = 1000, requires = "model")]
    samples_per_interval: usize,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output trace CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(fsmc::Error),
}

impl From<fsmc::Error> for Failure {
    fn from(e: fsmc::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Lib(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a, stdout, stderr),
        Command::Inspect(a) => inspect(a, stdout),
        Command::Simulate(a) => simulate_cmd(a, stdout, stderr),
        Command::Evaluate(a) => evaluate(a, stdout, stderr),
        Command::Sweep(a) => sweep_cmd(a, stdout, stderr),
        Command::Synth(a) => synth(a, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.exit_code()
        }
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Sends `body` to `out` (or standard output) and the summary line to the
/// other stream, so piped output stays clean.
fn emit(out: &Option<PathBuf>, body: &str, summary: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => {
            write_atomic(path, body.as_bytes())?;
            writeln!(stdout, "{summary} -> {}", path.display())?;
        }
        None => {
            stdout.write_all(body.as_bytes())?;
            writeln!(stderr, "{summary}")?;
        }
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<MeasurementTrace, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Lib(annotate(e, path)))?;
    let mut trace = load_trace(BufReader::new(file), TraceFormat::Csv)?;
    trace
        .metadata
        .entry("source".into())
        .or_insert_with(|| path.display().to_string());
    Ok(trace)
}

fn read_model(path: &Path) -> Result<FsmcModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Lib(annotate(e, path)))?;
    Ok(FsmcModel::from_json_str(&text)?)
}

fn annotate(e: std::io::Error, path: &Path) -> fsmc::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

fn seed_note(seed: Option<u64>) -> (u64, &'static str) {
    match seed {
        Some(s) => (s, ""),
        None => (DEFAULT_SEED, " (default)"),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, Failure> {
    s.parse().map_err(|_| Failure::Usage(format!("unknown format {s:?} (expected json or text)")))
}

fn fit(a: FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let interval = a.interval.resolve()?;
    let cfg = a.model.build_config(interval, a.interval.freq_hz)?;
    let trace = read_trace(&a.trace)?;
    let model = build_model(&trace, &cfg)?;
    let json = model.to_json_string()?;
    let pooled = model.metadata.pooled_intervals.len();
    let summary = format!(
        "fit: {} samples, {} intervals of {} m, {} states{}",
        trace.len(),
        model.intervals.len(),
        model.interval_length,
        model.n_states,
        if pooled > 0 { format!(", {pooled} pooled") } else { String::new() }
    );
    for w in &model.metadata.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    emit(&a.out, &json, &summary, stdout, stderr)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn inspect(a: InspectArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let (lo, hi) = model.coverage();
    let iv = model.interval_at(a.at_m).ok_or_else(|| {
        Failure::Lib(fsmc::Error::Domain(format!(
            "{} m is outside the model coverage [{lo}, {hi}]",
            a.at_m
        )))
    })?;
    let (start, end) = model.layout().bounds(iv.index);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "interval {} [{start} {end}] m, {} levels, {} samples",
        iv.index,
        iv.n_states(),
        iv.sample_count
    );
    let _ = writeln!(out, "thresholds: {}", join(iv.levels.thresholds()));
    let _ = writeln!(out, "representatives: {}", join(iv.levels.representatives()));
    let _ = writeln!(out, "distortion: {}", iv.levels.distortion());
    let _ = writeln!(out, "state_probs: {}", join(&iv.state_probs));
    let _ = writeln!(out, "snr_pdf: m = {}, mean = {}", iv.snr_pdf.m, iv.snr_pdf.mean);
    stdout.write_all(out.as_bytes())?;
    Ok(())
}

fn simulate_cmd(a: SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let default = Trajectory::spanning(&model);
    let traj = Trajectory::new(
        a.start.unwrap_or(default.start),
        a.end.unwrap_or(default.end),
        a.step.unwrap_or(default.step),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let (seed, note) = seed_note(a.seed);
    let sim = simulate(&model, &traj, seed)?;
    let summary = format!(
        "simulate: {} steps over [{}, {}) m, step {} m, seed {seed}{note}",
        sim.samples.len(),
        traj.start,
        traj.end,
        traj.step
    );
    emit(&a.out, &sim.to_csv_string(), &summary, stdout, stderr)
}

fn evaluate(a: EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let format = parse_format(&a.format)?;
    if let Some(b) = a.bin_m.filter(|b| !(*b > 0.0)) {
        return Err(Failure::Usage(format!("--bin-m must be positive, got {b}")));
    }
    let model = read_model(&a.model)?;
    let holdout = read_trace(&a.trace)?;
    let (lo, hi) = model.coverage();
    let step = a.step.unwrap_or(model.interval_length / fsmc::simulate::DEFAULT_STEPS_PER_INTERVAL);
    let traj = Trajectory::new(holdout.min_distance().max(lo), holdout.max_distance().min(hi), step)?;
    let (seed, note) = seed_note(a.seed);
    let sim = simulate(&model, &traj, seed)?;
    let bin = a.bin_m.unwrap_or(step);
    let mse = mse_trace(&sim, &holdout, bin)?;

    let comparison = match a.at_m {
        None => Vec::new(),
        Some(at) => {
            let iv = model
                .interval_at(at)
                .ok_or_else(|| Failure::Lib(fsmc::Error::Domain(format!("{at} m is outside the model coverage"))))?;
            let (_, slices) = partition(&holdout, model.interval_length, model.origin)?;
            let slice = slices
                .iter()
                .find(|s| s.index == iv.index)
                .ok_or(fsmc::Error::EmptySlice { index: iv.index })?;
            compare_matrices(iv, slice)?
        }
    };
    let report = EvaluationReport {
        mse: Some(mse.mse),
        bin_width_m: Some(bin),
        coverage_fraction: Some(mse.coverage_fraction),
        comparison,
        sweep: Vec::new(),
    };
    if let Some(p) = &a.plot_out {
        write_atomic(p, profile_csv(&sim, &holdout, bin)?.as_bytes())?;
    }
    let summary = format!(
        "evaluate: mse {:.6} over {} bins of {bin} m, seed {seed}{note}",
        mse.mse, mse.common_bins
    );
    emit(&a.out, &render_report(&report, format)?, &summary, stdout, stderr)
}

fn sweep_cmd(a: SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let format = parse_format(&a.format)?;
    if a.interval_m.iter().any(|d| !(*d > 0.0)) {
        return Err(Failure::Usage("every --interval-m value must be positive".into()));
    }
    if a.states.iter().any(|&n| n < 2) {
        return Err(Failure::Usage("every --states value must be at least 2".into()));
    }
    let model_args = ModelArgs {
        states: 4,
        family: a.family.clone(),
        tol: a.tol,
        max_iter: a.max_iter,
        origin_m: a.origin_m,
    };
    let build = model_args.build_config(a.interval_m[0], None)?;
    let fit = read_trace(&a.trace)?;
    let holdout = read_trace(&a.holdout)?;
    let (seed, note) = seed_note(a.seed);
    let cfg = SweepConfig {
        build,
        base_seed: seed,
        bin_width: a.bin_m,
        step: a.step,
    };
    let cells = sweep(&fit, &holdout, &a.interval_m, &a.states, &cfg)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    for c in cells.iter().filter(|c| c.error.is_some()) {
        writeln!(
            stderr,
            "warning: cell ({} m, {} states): {}",
            c.interval_m,
            c.n_states,
            c.error.as_deref().unwrap_or_default()
        )?;
    }
    if let Some(p) = &a.plot_out {
        write_atomic(p, sweep_csv(&cells).as_bytes())?;
    }
    let report = EvaluationReport {
        sweep: cells,
        bin_width_m: a.bin_m,
        ..Default::default()
    };
    let summary = format!(
        "sweep: {} cells ({failed} failed), base seed {seed}{note}",
        report.sweep.len()
    );
    emit(&a.out, &render_report(&report, format)?, &summary, stdout, stderr)
}

fn synth(a: SynthArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let (trace, seed, note) = match (&a.spec, &a.model) {
        (Some(spec_path), None) => {
            let text = fs::read_to_string(spec_path).map_err(|e| Failure::Lib(annotate(e, spec_path)))?;
            let mut spec: SynthSpec = serde_json::from_str(&text).map_err(fsmc::Error::from)?;
            let note = if let Some(s) = a.seed {
                spec.seed = s;
                ""
            } else {
                " (from spec)"
            };
            (synth_trace(&spec)?, spec.seed, note)
        }
        (None, Some(model_path)) => {
            if a.samples_per_interval == 0 {
                return Err(Failure::Usage("--samples-per-interval must be positive".into()));
            }
            let model = read_model(model_path)?;
            let (seed, note) = seed_note(a.seed);
            (synth_from_model(&model, a.samples_per_interval, seed)?, seed, note)
        }
        _ => return Err(Failure::Usage("give exactly one of --spec or --model".into())),
    };
    let summary = format!(
        "synth: {} samples over [{}, {}] m, seed {seed}{note}",
        trace.len(),
        trace.min_distance(),
        trace.max_distance()
    );
    emit(&a.out, &trace.to_csv_string(), &summary, stdout, stderr)
}
