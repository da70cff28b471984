//! Command-line front end for the readout simulation and discrimination
//! library.
//!
//! Everything is file based: histograms and Rabi scans travel as CSV,
//! models and configs as JSON documents, frame streams as newline-delimited
//! JSON. Results print to stdout as JSON so commands compose in shell
//! pipelines; progress and warnings go to stderr.
//!
//! Exit codes: 0 on success, 1 on any validation or input error, 2 when
//! `reproduce` finds a mismatch against the published reference values.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ionreadout::calibration::{
    camera_depumping, camera_model, pmt_depumping, pmt_model, standard_camera_duty,
    two_ion_camera_model,
};
use ionreadout::detector::{
    emccd_histogram, emccd_rabi_series, pmt_beat_series, pmt_histogram, pmt_rabi_series,
    DepumpingSpec, IonDetectors,
};
use ionreadout::discriminator::{
    classify_counts, classify_global, crosstalk_estimate, optimal_threshold,
    threshold_in_clamp_spike,
};
use ionreadout::fitters::{
    background_ratio, fit_beat, fit_poisson_hist, fit_rabi, RabiSeries,
};
use ionreadout::formats::ModelDocument;
use ionreadout::pipeline::{
    ndjson_frames, run_stream, simulate_source, write_frames_path, PipelineConfig, Preparation,
    SourceScenario, StreamOutcome, ThresholdScheme,
};
use ionreadout::reproduce::{self, Report};
use ionreadout::sequencer::{
    build_standard_sequence, decision_latency, throughput, validate, DetectorKind,
    SequenceTimeline,
};
use ionreadout::{effective_seed, CountHistogram, Error, QubitState, Result};

/// Simulate, classify and schedule trapped-ion fluorescence readout.
#[derive(Parser)]
#[command(
    name = "ionreadout",
    version,
    about = "Fluorescence readout simulation and state discrimination",
    long_about = "Simulate photon-count statistics for photomultiplier and EMCCD \
                  detection of trapped-ion qubits, pick and apply state thresholds, \
                  fit Rabi and beat scans, schedule detection sequences, stream \
                  frames through the real-time classifier, and reproduce the \
                  published reference values.\n\n\
                  The IONREADOUT_SEED environment variable, when set to an \
                  integer, overrides every seed a command or config file supplies."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated data: histograms, scans, model documents, frames
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Optimal state threshold from bright and dark histograms
    Threshold(ThresholdArgs),
    /// Classify counts against per-ion or two-ion global thresholds
    Classify(ClassifyArgs),
    /// Fit a Rabi scan, a two-tone beat, or a Poisson histogram
    #[command(subcommand)]
    Fit(FitCommand),
    /// Readout crosstalk from per-area mean counts
    Crosstalk(CrosstalkArgs),
    /// Build a detection sequence and report its throughput
    Schedule(ScheduleArgs),
    /// Run the real-time classifier over a frame stream
    Stream(StreamArgs),
    /// Recompute the published reference values and compare
    Reproduce(ReproduceArgs),
}

/// Detector backend selector shared by several commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    /// Photomultiplier: Poisson counts, no readout chain
    Pmt,
    /// EMCCD camera: stochastic gain, read noise, clamp at the bias
    Camera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StateArg {
    Bright,
    Dark,
}

impl StateArg {
    fn state(self) -> QubitState {
        match self {
            StateArg::Bright => QubitState::Bright,
            StateArg::Dark => QubitState::Dark,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PreparationArg {
    /// Every ion dark on every shot
    AllDark,
    /// Every ion bright on every shot
    AllBright,
    /// Each ion independently bright with probability one half
    Superposition,
    /// All ions bright on even shots, dark on odd shots
    Alternating,
}

impl PreparationArg {
    fn preparation(self) -> Preparation {
        match self {
            PreparationArg::AllDark => Preparation::AllDark,
            PreparationArg::AllBright => Preparation::AllBright,
            PreparationArg::Superposition => Preparation::Superposition,
            PreparationArg::Alternating => Preparation::Alternating,
        }
    }
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Count histogram for one preparation, written as CSV
    Hist(SimulateHistArgs),
    /// Rabi scan (or two-tone beat scan) written as CSV
    Scan(SimulateScanArgs),
    /// Calibrated detector model document as JSON
    Model(SimulateModelArgs),
    /// Frame stream for the real-time classifier, written as NDJSON
    Frames(SimulateFramesArgs),
}

#[derive(Args)]
struct SimulateHistArgs {
    #[arg(long, value_enum)]
    detector: DetectorArg,
    /// Prepared state the histogram is conditioned on
    #[arg(long, value_enum)]
    state: StateArg,
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    /// RNG seed (IONREADOUT_SEED overrides)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disable state leakage during detection (pure Poisson statistics)
    #[arg(long)]
    no_depump: bool,
    /// Output CSV path (header `count,occurrences`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateScanArgs {
    #[arg(long, value_enum)]
    detector: DetectorArg,
    /// Pi-time of the driven transition in microseconds
    #[arg(long, default_value_t = 2.83557)]
    t_pi_us: f64,
    /// Second pi-time: both ions on one photomultiplier, beating tones
    #[arg(long)]
    t_pi2_us: Option<f64>,
    /// Longest pulse duration in microseconds
    #[arg(long, default_value_t = 8.0)]
    max_us: f64,
    /// Duration step in microseconds
    #[arg(long, default_value_t = 0.05)]
    step_us: f64,
    #[arg(long, default_value_t = 500)]
    shots_per_point: u64,
    /// RNG seed (IONREADOUT_SEED overrides)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disable state leakage during detection
    #[arg(long)]
    no_depump: bool,
    /// Output CSV path (header `duration_us,mean_counts,sd`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateModelArgs {
    #[arg(long, value_enum)]
    detector: DetectorArg,
    /// Per-ion camera model for the shared two-ion binning area
    #[arg(long)]
    two_ion: bool,
    /// Omit the depumping block (pure Poisson statistics)
    #[arg(long)]
    no_depump: bool,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateFramesArgs {
    /// Stream config JSON; single-ion camera defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed (IONREADOUT_SEED overrides both)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = PreparationArg::Alternating)]
    preparation: PreparationArg,
    /// Number of detections (camera sources add one cleaning frame each)
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, value_enum, default_value_t = DetectorArg::Camera)]
    detector: DetectorArg,
    /// Output NDJSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Bright-preparation histogram CSV
    #[arg(long)]
    bright: PathBuf,
    /// Dark-preparation histogram CSV
    #[arg(long)]
    dark: PathBuf,
    /// Camera bias level; warns when the optimum lands in the clamp spike
    #[arg(long)]
    bias: Option<u64>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Per-ion threshold, repeated once per binning area
    #[arg(long = "threshold", value_name = "COUNTS", conflicts_with_all = ["lower", "upper"])]
    thresholds: Vec<u64>,
    /// Two-ion global scheme: counts below this mean zero bright ions
    #[arg(long, requires = "upper")]
    lower: Option<u64>,
    /// Two-ion global scheme: counts at or above this mean two bright ions
    #[arg(long, requires = "lower")]
    upper: Option<u64>,
    /// Counts file, one detection per line; stdin when omitted
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FitCommand {
    /// Sinusoid fit of a Rabi scan; reports the pi-time and the
    /// off-resonant background ratio
    Rabi(FitRabiArgs),
    /// Two-tone beat fit; reports both pi-times and the envelope minimum
    Beat(FitBeatArgs),
    /// Poisson fit of a count histogram with an exclusion floor
    Hist(FitHistArgs),
}

#[derive(Args)]
struct FitRabiArgs {
    /// Rabi scan CSV (header `duration_us,mean_counts,sd`)
    #[arg(long)]
    series: PathBuf,
    /// Baseline counts to subtract before fitting; camera series need
    /// this for a meaningful background ratio
    #[arg(long)]
    baseline: Option<f64>,
}

#[derive(Args)]
struct FitBeatArgs {
    /// Beat scan CSV (header `duration_us,mean_counts,sd`)
    #[arg(long)]
    series: PathBuf,
}

#[derive(Args)]
struct FitHistArgs {
    /// Histogram CSV (header `count,occurrences`)
    #[arg(long)]
    hist: PathBuf,
    /// Exclude counts at or below this value (clamp spike, stray floor)
    #[arg(long)]
    floor: Option<u64>,
    /// Counts per unit of the fitted Poisson variable (camera gain chain)
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct CrosstalkArgs {
    /// Bright-preparation mean counts, comma separated, one per area
    #[arg(long)]
    bright: String,
    /// Dark-preparation mean counts, comma separated, one per area
    #[arg(long)]
    dark: String,
    /// Index of the area belonging to the prepared ion
    #[arg(long)]
    own_area: usize,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum, default_value_t = DetectorArg::Camera)]
    detector: DetectorArg,
    /// Microwave pulse duration in microseconds; repeat for several pulses
    #[arg(long = "pulse-us", value_name = "US")]
    pulses_us: Vec<f64>,
    /// Detections sharing one cooling block
    #[arg(long, default_value_t = 1)]
    detections: u64,
    /// Classifier processing time in microseconds, added to the latency
    #[arg(long, default_value_t = 100.0)]
    processing_us: f64,
    /// Print the JSON report only, no timeline rendering
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StreamArgs {
    /// Stream config JSON; single-ion camera defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// NDJSON frame file to replay
    #[arg(long, group = "source")]
    frames: Option<PathBuf>,
    /// Unix socket path to create and read one live NDJSON stream from
    #[arg(long, group = "source")]
    listen: Option<PathBuf>,
    /// Generate frames internally from the config's seed
    #[arg(long, group = "source")]
    simulate: bool,
    /// Preparation for --simulate
    #[arg(long, value_enum, default_value_t = PreparationArg::Alternating)]
    preparation: PreparationArg,
    /// Detections for --simulate
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    /// Detector backend for --simulate
    #[arg(long, value_enum, default_value_t = DetectorArg::Camera)]
    detector: DetectorArg,
    /// Overrides the config seed (IONREADOUT_SEED overrides both)
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many frames
    #[arg(long)]
    limit: Option<u64>,
    /// Write one DecisionRecord JSON per line to this file
    #[arg(long)]
    decisions_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SectionArg {
    /// Two-ion preparation error rates
    Table1,
    /// Joint outcome abundances of the superposition preparation
    Table2,
    /// Crosstalk counts and fractions at both ion separations
    Table3,
    /// Error-curve shape: 50% extremes and the clamp discontinuity
    SpamCurve,
    /// Cycle time and steady-state rates
    Throughput,
    /// Two-tone pi-times and the beat envelope minimum
    Beat,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Restrict the run to one section; all sections when omitted
    #[arg(value_enum)]
    section: Option<SectionArg>,
    /// Shots for the sections that simulate (IONREADOUT_SEED overrides
    /// the seed)
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long, default_value_t = 2026)]
    seed: u64,
    /// Print the report as JSON instead of the text table
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version render through clap's error path but are
            // not failures.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(cmd) => run_simulate(cmd)?,
        Command::Threshold(args) => run_threshold(args)?,
        Command::Classify(args) => run_classify(args)?,
        Command::Fit(cmd) => run_fit(cmd)?,
        Command::Crosstalk(args) => run_crosstalk(args)?,
        Command::Schedule(args) => run_schedule(args)?,
        Command::Stream(args) => run_stream_command(args)?,
        Command::Reproduce(args) => return run_reproduce(args),
    }
    Ok(ExitCode::SUCCESS)
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn depumping_for(detector: DetectorArg, disabled: bool) -> DepumpingSpec {
    if disabled {
        DepumpingSpec::none()
    } else {
        match detector {
            DetectorArg::Pmt => pmt_depumping(),
            DetectorArg::Camera => camera_depumping(),
        }
    }
}

fn run_simulate(cmd: SimulateCommand) -> Result<()> {
    match cmd {
        SimulateCommand::Hist(args) => {
            let seed = effective_seed(args.seed);
            let depump = depumping_for(args.detector, args.no_depump);
            let state = args.state.state();
            let hist = match args.detector {
                DetectorArg::Pmt => {
                    pmt_histogram(&pmt_model(), state, &depump, args.shots, seed)?
                }
                DetectorArg::Camera => {
                    emccd_histogram(&camera_model(), state, &depump, args.shots, seed)?
                }
            };
            hist.write_csv_path(&args.out)?;
            println!(
                "{}",
                json!({
                    "out": args.out,
                    "shots": args.shots,
                    "seed": seed,
                    "distinct_counts": hist.iter().count(),
                })
            );
        }
        SimulateCommand::Scan(args) => {
            let seed = effective_seed(args.seed);
            let depump = depumping_for(args.detector, args.no_depump);
            if !(args.step_us > 0.0 && args.max_us >= args.step_us) {
                return Err(invalid("scan needs 0 < step-us <= max-us"));
            }
            let points = (args.max_us / args.step_us).round() as usize;
            let durations_s: Vec<f64> =
                (0..=points).map(|i| i as f64 * args.step_us * 1e-6).collect();
            let series = match (args.detector, args.t_pi2_us) {
                (DetectorArg::Pmt, Some(t2)) => pmt_beat_series(
                    &pmt_model(),
                    &depump,
                    [args.t_pi_us * 1e-6, t2 * 1e-6],
                    &durations_s,
                    args.shots_per_point,
                    seed,
                )?,
                (DetectorArg::Camera, Some(_)) => {
                    return Err(invalid(
                        "a beat scan sums both ions on one photomultiplier; \
                         camera areas are read separately (drop --t-pi2-us)",
                    ))
                }
                (DetectorArg::Pmt, None) => pmt_rabi_series(
                    &pmt_model(),
                    &depump,
                    args.t_pi_us * 1e-6,
                    &durations_s,
                    args.shots_per_point,
                    seed,
                )?,
                (DetectorArg::Camera, None) => emccd_rabi_series(
                    &camera_model(),
                    &depump,
                    args.t_pi_us * 1e-6,
                    &durations_s,
                    args.shots_per_point,
                    seed,
                )?,
            };
            series.write_csv_path(&args.out)?;
            println!(
                "{}",
                json!({
                    "out": args.out,
                    "points": series.samples.len(),
                    "shots_per_point": args.shots_per_point,
                    "seed": seed,
                })
            );
        }
        SimulateCommand::Model(args) => {
            let depump = (!args.no_depump).then(|| match args.detector {
                DetectorArg::Pmt => pmt_depumping(),
                DetectorArg::Camera => camera_depumping(),
            });
            let doc = match (args.detector, args.two_ion) {
                (DetectorArg::Pmt, true) => {
                    return Err(invalid("--two-ion applies to the camera only"))
                }
                (DetectorArg::Pmt, false) => ModelDocument::for_pmt(pmt_model(), depump),
                (DetectorArg::Camera, false) => ModelDocument::for_emccd(camera_model(), depump),
                (DetectorArg::Camera, true) => {
                    ModelDocument::for_emccd(two_ion_camera_model(), depump)
                }
            };
            match args.out {
                Some(path) => doc.write_json_path(path)?,
                None => println!("{}", doc.to_json_string()?),
            }
        }
        SimulateCommand::Frames(args) => {
            let config = load_config(args.config.as_deref(), args.seed)?;
            let source = build_source(&config, args.preparation, args.shots, args.detector)?;
            let frames: Result<Vec<_>> = source.collect();
            let frames = frames?;
            write_frames_path(&args.out, &frames)?;
            println!(
                "{}",
                json!({
                    "out": args.out,
                    "frames": frames.len(),
                    "seed": config.seed,
                })
            );
        }
    }
    Ok(())
}

fn run_threshold(args: ThresholdArgs) -> Result<()> {
    let bright = CountHistogram::read_csv_path(&args.bright)?;
    let dark = CountHistogram::read_csv_path(&args.dark)?;
    let scan = optimal_threshold(&bright, &dark)?;
    if let Some(bias) = args.bias {
        if threshold_in_clamp_spike(scan.threshold, bias) {
            eprintln!(
                "warning: optimal threshold {} sits at or below the clamp \
                 level {bias}; the error curve is unreliable there",
                scan.threshold
            );
        }
    }
    println!("{}", json!({ "t": scan.threshold, "spam": scan.error }));
    Ok(())
}

fn run_classify(args: ClassifyArgs) -> Result<()> {
    let global = match (args.lower, args.upper) {
        (Some(lower), Some(upper)) => Some((lower, upper)),
        (None, None) => None,
        // clap's `requires` already rejects one without the other.
        _ => unreachable!(),
    };
    if global.is_none() && args.thresholds.is_empty() {
        return Err(invalid(
            "pass --threshold once per area, or --lower and --upper for the \
             two-ion global scheme",
        ));
    }
    let lines: Box<dyn BufRead> = match &args.input {
        Some(path) => Box::new(BufReader::new(File::open(path)?)),
        None => Box::new(BufReader::new(std::io::stdin())),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (number, line) in lines.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let counts: Vec<u64> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<u64>()
                    .map_err(|_| invalid(format!("line {}: bad count {f:?}", number + 1)))
            })
            .collect::<Result<_>>()?;
        match global {
            Some(thresholds) => {
                if counts.len() != 1 {
                    return Err(invalid(format!(
                        "line {}: the global scheme reads one summed count, got {}",
                        number + 1,
                        counts.len()
                    )));
                }
                writeln!(out, "{}", classify_global(counts[0], thresholds)?)?;
            }
            None => {
                let states = classify_counts(&counts, &args.thresholds)?;
                let rendered: Vec<&str> = states.iter().map(|s| state_name(*s)).collect();
                writeln!(out, "{}", rendered.join(","))?;
            }
        }
    }
    Ok(())
}

fn state_name(state: QubitState) -> &'static str {
    match state {
        QubitState::Bright => "bright",
        QubitState::Dark => "dark",
    }
}

fn run_fit(cmd: FitCommand) -> Result<()> {
    match cmd {
        FitCommand::Rabi(args) => {
            let mut series = RabiSeries::read_csv_path(&args.series)?;
            if let Some(baseline) = args.baseline {
                series = series.offset_means(-baseline);
            }
            let fit = fit_rabi(&series, None)?;
            let ratio = match background_ratio(&fit) {
                Ok(r) => json!(r),
                Err(e) => {
                    eprintln!("note: no background ratio: {e}");
                    serde_json::Value::Null
                }
            };
            let sd = |i: usize| fit.covariance[i][i].max(0.0).sqrt();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "a": fit.a,
                    "t_pi_us": fit.t_pi * 1e6,
                    "t_pi_sd_us": sd(1) * 1e6,
                    "phi": fit.phi,
                    "b": fit.b,
                    "iterations": fit.iterations,
                    "residual": fit.residual,
                    "background_ratio": ratio,
                }))?
            );
        }
        FitCommand::Beat(args) => {
            let series = RabiSeries::read_csv_path(&args.series)?;
            let fit = fit_beat(&series)?;
            let minimum = match fit.envelope_minimum() {
                Ok(t) => json!(t * 1e6),
                Err(e) => {
                    eprintln!("note: no envelope minimum: {e}");
                    serde_json::Value::Null
                }
            };
            let sd = |i: usize| fit.covariance[i][i].max(0.0).sqrt();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "a1": fit.a1,
                    "t_pi1_us": fit.t_pi1 * 1e6,
                    "t_pi1_sd_us": sd(1) * 1e6,
                    "phi1": fit.phi1,
                    "a2": fit.a2,
                    "t_pi2_us": fit.t_pi2 * 1e6,
                    "t_pi2_sd_us": sd(4) * 1e6,
                    "phi2": fit.phi2,
                    "b": fit.b,
                    "iterations": fit.iterations,
                    "residual": fit.residual,
                    "envelope_minimum_us": minimum,
                }))?
            );
        }
        FitCommand::Hist(args) => {
            let hist = CountHistogram::read_csv_path(&args.hist)?;
            let fit = fit_poisson_hist(&hist, args.floor, args.scale)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "lambda": fit.lambda,
                    "amplitude": fit.amplitude,
                    "exclusion_floor": fit.exclusion_floor,
                    "scale": fit.scale,
                    "mean_counts": fit.mean_counts(),
                }))?
            );
        }
    }
    Ok(())
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("{what}: bad number {f:?}")))
        })
        .collect()
}

fn run_crosstalk(args: CrosstalkArgs) -> Result<()> {
    let bright = parse_f64_list(&args.bright, "--bright")?;
    let dark = parse_f64_list(&args.dark, "--dark")?;
    let estimate = crosstalk_estimate(&bright, &dark, args.own_area)?;
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    Ok(())
}

/// Fixed-width timeline rendering: one row per segment with its start,
/// label, a proportional bar, and its duration.
fn render_gantt(timeline: &SequenceTimeline) -> String {
    const BAR_WIDTH: usize = 48;
    let total = timeline.total_duration_ns();
    let mut out = String::new();
    let mut start_ns = 0u64;
    for segment in &timeline.segments {
        let bar = ((segment.duration_ns as u128 * BAR_WIDTH as u128) / total as u128).max(1);
        out.push_str(&format!(
            "{:>10.3} ms  {:<12} {:<BAR_WIDTH$} {:>8.3} ms\n",
            start_ns as f64 / 1e6,
            segment.label,
            "#".repeat(bar as usize),
            segment.duration_ns as f64 / 1e6,
        ));
        start_ns += segment.duration_ns;
    }
    out.push_str(&format!("{:>10.3} ms  total\n", total as f64 / 1e6));
    out
}

fn run_schedule(args: ScheduleArgs) -> Result<()> {
    let detector = match args.detector {
        DetectorArg::Pmt => DetectorKind::Pmt,
        DetectorArg::Camera => DetectorKind::Emccd,
    };
    let pulses_ns: Vec<u64> = args
        .pulses_us
        .iter()
        .map(|&us| {
            if us > 0.0 && us.is_finite() {
                Ok((us * 1000.0).round() as u64)
            } else {
                Err(invalid(format!("pulse duration must be positive, got {us}")))
            }
        })
        .collect::<Result<_>>()?;
    let timeline = build_standard_sequence(&pulses_ns, detector)?;
    let duty = standard_camera_duty();
    let violations = validate(&timeline, &duty)?;
    let rates = throughput(&timeline, &duty, args.detections)?;
    let latency_s = decision_latency(&timeline, args.processing_us * 1e-6)?;
    let report = json!({
        "cycle_ns": timeline.total_duration_ns(),
        "throughput": rates,
        "decision_latency_s": latency_s,
        "violations": violations,
    });
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", render_gantt(&timeline));
        println!("{report}");
    }
    Ok(())
}

fn load_config(path: Option<&Path>, seed_override: Option<u64>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(path) => {
            let mut raw = String::new();
            File::open(path)?.read_to_string(&mut raw)?;
            serde_json::from_str::<PipelineConfig>(&raw)?
        }
        None => PipelineConfig::single_ion_camera(1),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    config.seed = effective_seed(config.seed);
    config.validate()?;
    Ok(config)
}

/// Detector models matching the config's threshold scheme: one model per
/// per-ion threshold, or two models summed onto the shared area for the
/// global double-threshold scheme.
fn build_source(
    config: &PipelineConfig,
    preparation: PreparationArg,
    shots: u64,
    detector: DetectorArg,
) -> Result<ionreadout::pipeline::FrameSource> {
    let ions = match &config.thresholds {
        ThresholdScheme::PerIon(t) => t.len(),
        ThresholdScheme::TwoIonGlobal { .. } => 2,
    };
    let shared = matches!(config.thresholds, ThresholdScheme::TwoIonGlobal { .. });
    let detectors = match detector {
        DetectorArg::Pmt => IonDetectors::Pmt(vec![pmt_model(); ions]),
        DetectorArg::Camera if shared => IonDetectors::Emccd(vec![two_ion_camera_model(); ions]),
        DetectorArg::Camera => IonDetectors::Emccd(vec![camera_model(); ions]),
    };
    let depump = depumping_for(detector, false);
    let scenario = SourceScenario {
        preparation: preparation.preparation(),
        shots,
    };
    simulate_source(config, scenario, detectors, depump)
}

fn write_decisions(path: &Path, outcome: &StreamOutcome) -> Result<()> {
    let mut file = File::create(path)?;
    for decision in &outcome.decisions {
        serde_json::to_writer(&mut file, decision)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn run_stream_command(args: StreamArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let sources = [args.frames.is_some(), args.listen.is_some(), args.simulate]
        .iter()
        .filter(|&&s| s)
        .count();
    if sources != 1 {
        return Err(invalid(
            "pick exactly one source: --frames FILE, --listen SOCKET, or --simulate",
        ));
    }
    let outcome = if let Some(path) = &args.frames {
        let file = BufReader::new(File::open(path)?);
        run_stream(&config, ndjson_frames(file), args.limit)?
    } else if let Some(path) = &args.listen {
        let listener = std::os::unix::net::UnixListener::bind(path)?;
        eprintln!("listening on {}", path.display());
        let (connection, _) = listener.accept()?;
        let outcome = run_stream(&config, ndjson_frames(BufReader::new(connection)), args.limit);
        let _ = std::fs::remove_file(path);
        outcome?
    } else {
        let source = build_source(&config, args.preparation, args.shots, args.detector)?;
        run_stream(&config, source, args.limit)?
    };
    if let Some(path) = &args.decisions_out {
        write_decisions(path, &outcome)?;
    }
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    Ok(())
}

fn run_reproduce(args: ReproduceArgs) -> Result<ExitCode> {
    let seed = effective_seed(args.seed);
    let report = match args.section {
        None => reproduce::standard_report(args.shots, seed)?,
        Some(SectionArg::Table1) => Report { checks: reproduce::table1_checks() },
        Some(SectionArg::Table2) => Report { checks: reproduce::table2_checks() },
        Some(SectionArg::Table3) => Report { checks: reproduce::table3_checks() },
        Some(SectionArg::SpamCurve) => Report {
            checks: reproduce::spam_shape_checks(args.shots, seed)?,
        },
        Some(SectionArg::Throughput) => Report { checks: reproduce::throughput_checks()? },
        Some(SectionArg::Beat) => Report { checks: reproduce::beat_checks()? },
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_text());
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
