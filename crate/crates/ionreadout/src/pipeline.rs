//! Real-time frame stream engine.
//!
//! Frames of per-area counts arrive at camera rate from a producer (a
//! simulated source, an NDJSON file, or a local socket), cross a bounded
//! channel, and are classified one by one on the consumer side. Cleaning
//! frames carry no information about the qubit state and are counted but
//! never classified; every data frame yields exactly one decision, in
//! order, whether or not it met the latency budget.
//!
//! Concurrency contract: one producer, one consumer, a bounded buffer of
//! configurable depth between them. The channel preserves order and never
//! drops; when the consumer falls behind, backpressure blocks the producer.
//! Classification itself is single-threaded per stream; independent streams
//! may run in parallel.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{DepumpingSpec, IonDetectors, MultiIonCounts, QubitState};
use crate::discriminator::{classify, classify_global};
use crate::error::{Error, Result};
use crate::numeric::rng_from_seed;
use crate::optics::BinningArea;
use crate::sequencer::CameraDutyModel;

/// What a frame holds: sensor garbage flushed before a detection, or the
/// detection image itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// Accumulated charge read off the sensor and discarded; the counts
    /// are dominated by cooling fluorescence and mean nothing.
    Cleaning,
    /// A detection readout; classified into a decision.
    Data,
}

/// One readout frame reduced to its per-area counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Strictly increasing across a stream; gaps are allowed, reordering
    /// is fatal.
    pub sequence_index: u64,
    /// Capture time in nanoseconds from the start of the stream.
    pub timestamp_ns: u64,
    pub kind: FrameKind,
    /// One integer count per configured binning area.
    pub area_counts: Vec<u64>,
}

/// The classification of one data frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Sequence index of the frame this decision came from.
    pub sequence_index: u64,
    /// Per-ion states for a per-area threshold scheme; empty for a shared
    /// area, where individual states cannot be told apart.
    pub per_ion_state: Vec<QubitState>,
    /// Number of bright ions from a shared-area double threshold; `None`
    /// for per-ion schemes.
    pub global_bright: Option<u8>,
    /// Wall-clock time from frame ingestion to the decision.
    pub ingest_to_decision_ns: u64,
}

/// How counts become states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScheme {
    /// One threshold per binning area; count at or above means bright.
    PerIon(Vec<u64>),
    /// One shared area for two ions: below `lower` reads zero bright,
    /// below `upper` one, otherwise two.
    TwoIonGlobal { lower: u64, upper: u64 },
}

impl ThresholdScheme {
    /// Number of area counts every frame must carry under this scheme.
    pub fn area_count(&self) -> usize {
        match self {
            ThresholdScheme::PerIon(t) => t.len(),
            ThresholdScheme::TwoIonGlobal { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdScheme::PerIon(t) if t.is_empty() => {
                Err(Error::invalid("per-ion scheme needs at least one threshold"))
            }
            ThresholdScheme::TwoIonGlobal { lower, upper } if lower >= upper => Err(
                Error::invalid(format!("global thresholds must increase: {lower} >= {upper}")),
            ),
            _ => Ok(()),
        }
    }
}

fn default_buffer_depth() -> usize {
    64
}

fn default_duty() -> CameraDutyModel {
    crate::calibration::standard_camera_duty()
}

/// Stream configuration. Serialized as one JSON document; field defaults
/// are documented per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Frames per second the source delivers. Must not exceed the duty
    /// model's readout rate.
    pub frame_rate_hz: f64,
    /// Budget for ingest-to-decision latency. Exceeding it is recorded,
    /// never fatal. Must stay below the inter-frame period: a decision
    /// slower than the period can never catch up.
    pub latency_budget_ns: u64,
    pub thresholds: ThresholdScheme,
    /// Binning-area geometry, carried for provenance and simulation; may
    /// be empty for streams of pre-extracted counts (default: empty).
    #[serde(default)]
    pub areas: Vec<BinningArea>,
    /// RNG seed for simulated sources. The CLI lets the IONREADOUT_SEED
    /// environment variable override it; the library uses it as given.
    pub seed: u64,
    /// Bounded channel depth between producer and consumer (default 64).
    #[serde(default = "default_buffer_depth")]
    pub buffer_depth: usize,
    /// Camera readout-rate limit (default: 200 per second, 2 ms readout).
    #[serde(default = "default_duty")]
    pub duty: CameraDutyModel,
}

impl PipelineConfig {
    /// Single-ion camera defaults: 200 frames per second, 1 ms latency
    /// budget, the calibrated single-ion threshold, no area geometry.
    pub fn single_ion_camera(seed: u64) -> PipelineConfig {
        PipelineConfig {
            frame_rate_hz: 200.0,
            latency_budget_ns: 1_000_000,
            thresholds: ThresholdScheme::PerIon(vec![crate::calibration::CAMERA_THRESHOLD]),
            areas: Vec::new(),
            seed,
            buffer_depth: default_buffer_depth(),
            duty: default_duty(),
        }
    }

    /// Two ions on one shared area, classified by the double threshold.
    /// Same rate, budget and buffering as [`Self::single_ion_camera`].
    pub fn two_ion_global_camera(seed: u64) -> PipelineConfig {
        let (lower, upper) = crate::calibration::TWO_ION_CAMERA_THRESHOLDS;
        PipelineConfig {
            thresholds: ThresholdScheme::TwoIonGlobal { lower, upper },
            ..PipelineConfig::single_ion_camera(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.duty.validate()?;
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        if self.frame_rate_hz > self.duty.max_readout_rate {
            return Err(Error::invalid(format!(
                "frame rate {} exceeds the duty limit {}",
                self.frame_rate_hz, self.duty.max_readout_rate
            )));
        }
        let period_ns = 1e9 / self.frame_rate_hz;
        if self.latency_budget_ns as f64 >= period_ns {
            return Err(Error::invalid(format!(
                "latency budget {} ns must stay below the frame period {period_ns} ns",
                self.latency_budget_ns
            )));
        }
        self.thresholds.validate()?;
        if !self.areas.is_empty() {
            if self.areas.len() != self.thresholds.area_count() {
                return Err(Error::invalid(format!(
                    "{} areas configured but the threshold scheme reads {}",
                    self.areas.len(),
                    self.thresholds.area_count()
                )));
            }
            for (i, area) in self.areas.iter().enumerate() {
                area.validate()?;
                for (j, other) in self.areas.iter().enumerate().skip(i + 1) {
                    if area.overlaps(other) {
                        return Err(Error::OverlappingAreas(format!("areas {i} and {j}")));
                    }
                }
            }
        }
        if self.buffer_depth == 0 {
            return Err(Error::invalid("buffer depth must be at least 1"));
        }
        Ok(())
    }

    /// Nominal spacing between frames in nanoseconds.
    pub fn frame_period_ns(&self) -> f64 {
        1e9 / self.frame_rate_hz
    }
}

/// Classify one data frame's area counts under a threshold scheme.
///
/// This is the same arithmetic the offline classifiers use, exposed as one
/// function so the streamed and batch paths cannot diverge.
pub fn decide(
    thresholds: &ThresholdScheme,
    area_counts: &[u64],
) -> Result<(Vec<QubitState>, Option<u8>)> {
    if area_counts.len() != thresholds.area_count() {
        return Err(Error::invalid(format!(
            "frame carries {} area counts, scheme expects {}",
            area_counts.len(),
            thresholds.area_count()
        )));
    }
    match thresholds {
        ThresholdScheme::PerIon(t) => {
            let states = area_counts
                .iter()
                .zip(t)
                .map(|(&c, &t)| classify(c, t))
                .collect();
            Ok((states, None))
        }
        ThresholdScheme::TwoIonGlobal { lower, upper } => {
            let n = classify_global(area_counts[0], (*lower, *upper))?;
            Ok((Vec::new(), Some(n)))
        }
    }
}

/// Latency and accounting for one stream run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub frames_in: u64,
    pub cleaning_frames: u64,
    pub decisions: u64,
    pub max_latency_ns: u64,
    pub mean_latency_ns: f64,
    /// Nearest-rank 99th percentile of ingest-to-decision latency.
    pub p99_latency_ns: u64,
    /// Decisions that exceeded the budget; the run continues past them.
    pub budget_violations: u64,
    pub budget_met: bool,
}

/// Everything a stream run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub decisions: Vec<DecisionRecord>,
    pub summary: StreamSummary,
}

fn summarize(latencies: &[u64], budget_ns: u64, frames_in: u64, cleaning: u64) -> StreamSummary {
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let violations = latencies.iter().filter(|&&l| l > budget_ns).count() as u64;
    let (max, mean, p99) = if sorted.is_empty() {
        (0, 0.0, 0)
    } else {
        let n = sorted.len();
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        let mean = sorted.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        (sorted[n - 1], mean, sorted[rank - 1])
    };
    StreamSummary {
        frames_in,
        cleaning_frames: cleaning,
        decisions: latencies.len() as u64,
        max_latency_ns: max,
        mean_latency_ns: mean,
        p99_latency_ns: p99,
        budget_violations: violations,
        budget_met: violations == 0,
    }
}

fn consume(
    config: &PipelineConfig,
    rx: mpsc::Receiver<Result<FrameRecord>>,
    limit: Option<u64>,
) -> Result<StreamOutcome> {
    let expected_areas = config.thresholds.area_count();
    let mut previous: Option<u64> = None;
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut latencies: Vec<u64> = Vec::new();
    let mut frames_in = 0u64;
    let mut cleaning = 0u64;

    while limit.is_none_or(|l| frames_in < l) {
        let frame = match rx.recv() {
            Ok(item) => item?,
            Err(mpsc::RecvError) => break,
        };
        let ingest = Instant::now();
        frames_in += 1;
        if let Some(prev) = previous {
            if frame.sequence_index <= prev {
                return Err(Error::OutOfOrderFrame {
                    previous: prev,
                    got: frame.sequence_index,
                });
            }
        }
        previous = Some(frame.sequence_index);
        if frame.area_counts.len() != expected_areas {
            return Err(Error::invalid(format!(
                "frame {} carries {} area counts, configured for {expected_areas}",
                frame.sequence_index,
                frame.area_counts.len()
            )));
        }
        match frame.kind {
            FrameKind::Cleaning => cleaning += 1,
            FrameKind::Data => {
                let (per_ion_state, global_bright) = decide(&config.thresholds, &frame.area_counts)?;
                let latency = ingest.elapsed().as_nanos().min(u64::MAX as u128) as u64;
                decisions.push(DecisionRecord {
                    sequence_index: frame.sequence_index,
                    per_ion_state,
                    global_bright,
                    ingest_to_decision_ns: latency,
                });
                latencies.push(latency);
            }
        }
    }

    Ok(StreamOutcome {
        summary: summarize(&latencies, config.latency_budget_ns, frames_in, cleaning),
        decisions,
    })
}

/// Run a frame stream to completion (or to `limit` ingested frames).
///
/// The source runs on its own thread and feeds a bounded channel of
/// `config.buffer_depth` frames; this thread classifies. Every data frame
/// produces exactly one decision in source order; cleaning frames produce
/// none. Out-of-order frames and malformed frames are fatal. Latency-budget
/// violations are recorded in the summary and the run continues.
///
/// Decisions depend only on the frame contents, so a source with a fixed
/// seed yields a bit-identical decision sequence on every run; only the
/// measured latencies vary.
pub fn run_stream<I>(config: &PipelineConfig, source: I, limit: Option<u64>) -> Result<StreamOutcome>
where
    I: IntoIterator<Item = Result<FrameRecord>>,
    I::IntoIter: Send,
{
    config.validate()?;
    let iter = source.into_iter();
    let (tx, rx) = mpsc::sync_channel::<Result<FrameRecord>>(config.buffer_depth);
    thread::scope(|scope| {
        let producer = scope.spawn(move || {
            for item in iter {
                // The consumer hanging up (limit reached or fatal error)
                // is a normal way for a stream to end.
                if tx.send(item).is_err() {
                    break;
                }
            }
        });
        let result = consume(config, rx, limit);
        producer.join().expect("frame producer panicked");
        result
    })
}

/// Intended per-shot preparation of every ion in a simulated source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    AllDark,
    AllBright,
    /// Every ion independently bright with probability one half.
    Superposition,
    /// All ions bright on even shots, dark on odd shots.
    Alternating,
}

/// What a simulated source should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceScenario {
    pub preparation: Preparation,
    /// Number of detections; each camera detection is preceded by one
    /// cleaning frame.
    pub shots: u64,
}

/// Deterministic simulated frame source.
///
/// Yields `Ok` frames only; the `Result` item type lets it plug straight
/// into [`run_stream`] alongside fallible file and socket sources.
pub struct FrameSource {
    rng: ChaCha8Rng,
    detectors: IonDetectors,
    depump: DepumpingSpec,
    shared: bool,
    cleaning: bool,
    period_ns: f64,
    preparation: Preparation,
    shots: u64,
    shot: u64,
    frame: u64,
    pending: VecDeque<FrameRecord>,
}

impl FrameSource {
    fn draw_states(&mut self) -> Vec<QubitState> {
        let n = self.detectors.len();
        match self.preparation {
            Preparation::AllDark => vec![QubitState::Dark; n],
            Preparation::AllBright => vec![QubitState::Bright; n],
            Preparation::Alternating if self.shot % 2 == 0 => vec![QubitState::Bright; n],
            Preparation::Alternating => vec![QubitState::Dark; n],
            Preparation::Superposition => (0..n)
                .map(|_| {
                    if self.rng.random::<f64>() < 0.5 {
                        QubitState::Bright
                    } else {
                        QubitState::Dark
                    }
                })
                .collect(),
        }
    }

    fn sample_counts(&mut self, states: &[QubitState]) -> Vec<u64> {
        let counts = crate::detector::multi_ion_counts_with(
            &self.detectors,
            states,
            &self.depump,
            self.shared,
            &mut self.rng,
        )
        .expect("models validated when the source was built");
        match counts {
            MultiIonCounts::Shared(c) => vec![c],
            MultiIonCounts::PerIon(v) => v,
        }
    }

    fn push_frame(&mut self, kind: FrameKind, area_counts: Vec<u64>) {
        let index = self.frame;
        self.frame += 1;
        self.pending.push_back(FrameRecord {
            sequence_index: index,
            timestamp_ns: (index as f64 * self.period_ns).round() as u64,
            kind,
            area_counts,
        });
    }

    fn fill_next_shot(&mut self) -> bool {
        if self.shot >= self.shots {
            return false;
        }
        let states = self.draw_states();
        if self.cleaning {
            // The cleaning image holds charge accumulated during Doppler
            // cooling, when every ion scatters regardless of its qubit
            // state: draw it all-bright. Its value must never be used.
            let flood = vec![QubitState::Bright; self.detectors.len()];
            let counts = self.sample_counts(&flood);
            self.push_frame(FrameKind::Cleaning, counts);
        }
        let counts = self.sample_counts(&states);
        self.push_frame(FrameKind::Data, counts);
        self.shot += 1;
        true
    }
}

impl Iterator for FrameSource {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pending.is_empty() && !self.fill_next_shot() {
            return None;
        }
        self.pending.pop_front().map(Ok)
    }
}

/// Build a simulated source for `config`.
///
/// Camera detectors emit one cleaning frame before every data frame, per
/// the standard sequence; photomultiplier detectors emit data frames only.
/// A shared-area (global) threshold scheme sums all ions into one count
/// through a single readout chain; a per-ion scheme reads one area per
/// detector model and requires one threshold per model. Fixed seed, fixed
/// output.
pub fn simulate_source(
    config: &PipelineConfig,
    scenario: SourceScenario,
    detectors: IonDetectors,
    depump: DepumpingSpec,
) -> Result<FrameSource> {
    config.validate()?;
    depump.validate()?;
    if detectors.is_empty() {
        return Err(Error::invalid("source needs at least one detector model"));
    }
    match &detectors {
        IonDetectors::Pmt(models) => models.iter().try_for_each(|m| m.validate())?,
        IonDetectors::Emccd(models) => models.iter().try_for_each(|m| m.validate())?,
    }
    let shared = match &config.thresholds {
        ThresholdScheme::TwoIonGlobal { .. } => {
            if detectors.len() != 2 {
                return Err(Error::invalid(format!(
                    "global double threshold reads two ions, got {} models",
                    detectors.len()
                )));
            }
            true
        }
        ThresholdScheme::PerIon(t) => {
            if t.len() != detectors.len() {
                return Err(Error::invalid(format!(
                    "{} per-ion thresholds for {} detector models",
                    t.len(),
                    detectors.len()
                )));
            }
            false
        }
    };
    let cleaning = matches!(detectors, IonDetectors::Emccd(_));
    Ok(FrameSource {
        rng: rng_from_seed(config.seed),
        detectors,
        depump,
        shared,
        cleaning,
        period_ns: config.frame_period_ns(),
        preparation: scenario.preparation,
        shots: scenario.shots,
        shot: 0,
        frame: 0,
        pending: VecDeque::new(),
    })
}

/// Write frames as newline-delimited JSON.
pub fn write_ndjson_frames<'a, W, I>(writer: &mut W, frames: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a FrameRecord>,
{
    for frame in frames {
        serde_json::to_writer(&mut *writer, frame)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Streaming NDJSON frame decoder over any byte source (file, socket).
/// Blank lines are skipped; a malformed line is an error naming it.
pub struct NdjsonFrames<R> {
    lines: std::io::Lines<BufReader<R>>,
    line_number: usize,
}

/// Decode frames from a reader; works for files and local sockets alike.
pub fn ndjson_frames<R: Read>(reader: R) -> NdjsonFrames<R> {
    NdjsonFrames {
        lines: BufReader::new(reader).lines(),
        line_number: 0,
    }
}

impl<R: Read> Iterator for NdjsonFrames<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_number += 1;
            match self.lines.next()? {
                Err(e) => return Some(Err(Error::Io(e))),
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => {
                    return Some(serde_json::from_str(&line).map_err(|e| {
                        Error::Format(format!("frame line {}: {e}", self.line_number))
                    }));
                }
            }
        }
    }
}

/// Write a whole frame stream to a file.
pub fn write_frames_path(path: impl AsRef<Path>, frames: &[FrameRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_ndjson_frames(&mut file, frames)?;
    file.flush()?;
    Ok(())
}

/// Read a whole NDJSON frame file.
pub fn read_frames_path(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    ndjson_frames(std::fs::File::open(path)?).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{
        camera_depumping, camera_model, two_ion_camera_model, CAMERA_THRESHOLD,
    };
    use crate::detector::DepumpingSpec;

    fn ok_frames(frames: Vec<FrameRecord>) -> impl Iterator<Item = Result<FrameRecord>> + Send {
        frames.into_iter().map(Ok)
    }

    fn manual_frame(index: u64, kind: FrameKind, counts: Vec<u64>) -> FrameRecord {
        FrameRecord {
            sequence_index: index,
            timestamp_ns: index * 5_000_000,
            kind,
            area_counts: counts,
        }
    }

    #[test]
    fn single_ion_stream_matches_offline_classification() {
        let config = PipelineConfig {
            buffer_depth: 2,
            ..PipelineConfig::single_ion_camera(41)
        };
        let scenario = SourceScenario {
            preparation: Preparation::Alternating,
            shots: 5_000,
        };
        let detectors = IonDetectors::Emccd(vec![camera_model()]);

        let frames: Vec<FrameRecord> =
            simulate_source(&config, scenario, detectors.clone(), camera_depumping())
                .unwrap()
                .map(|f| f.unwrap())
                .collect();
        assert_eq!(frames.len(), 10_000);

        let source = simulate_source(&config, scenario, detectors, camera_depumping()).unwrap();
        let outcome = run_stream(&config, source, None).unwrap();

        assert_eq!(outcome.summary.frames_in, 10_000);
        assert_eq!(outcome.summary.cleaning_frames, 5_000);
        assert_eq!(outcome.decisions.len(), 5_000);

        // Streamed decisions equal batch classification of the same
        // counts, frame for frame.
        let data: Vec<&FrameRecord> = frames
            .iter()
            .filter(|f| f.kind == FrameKind::Data)
            .collect();
        for (decision, frame) in outcome.decisions.iter().zip(&data) {
            assert_eq!(decision.sequence_index, frame.sequence_index);
            let offline = classify(frame.area_counts[0], CAMERA_THRESHOLD);
            assert_eq!(decision.per_ion_state, vec![offline]);
            assert_eq!(decision.global_bright, None);
        }

        // An alternating source classifies almost perfectly; the tiny
        // remainder is real depumping leakage, not stream corruption.
        let correct = outcome
            .decisions
            .iter()
            .enumerate()
            .filter(|(i, d)| {
                let expected = if i % 2 == 0 {
                    QubitState::Bright
                } else {
                    QubitState::Dark
                };
                d.per_ion_state[0] == expected
            })
            .count();
        assert!(correct >= 4_900, "only {correct} of 5000 match preparation");
    }

    #[test]
    fn all_cleaning_frames_produce_no_decisions() {
        let config = PipelineConfig::single_ion_camera(1);
        let frames: Vec<FrameRecord> = (0..200)
            .map(|i| manual_frame(i, FrameKind::Cleaning, vec![12_000]))
            .collect();
        let outcome = run_stream(&config, ok_frames(frames), None).unwrap();
        assert_eq!(outcome.decisions.len(), 0);
        assert_eq!(outcome.summary.cleaning_frames, 200);
        assert_eq!(outcome.summary.decisions, 0);
        assert!(outcome.summary.budget_met);
        assert_eq!(outcome.summary.max_latency_ns, 0);
    }

    #[test]
    fn out_of_order_frames_are_fatal() {
        let config = PipelineConfig::single_ion_camera(1);
        let frames = vec![
            manual_frame(0, FrameKind::Data, vec![100]),
            manual_frame(2, FrameKind::Data, vec![100]),
            manual_frame(1, FrameKind::Data, vec![100]),
        ];
        match run_stream(&config, ok_frames(frames), None) {
            Err(Error::OutOfOrderFrame { previous: 2, got: 1 }) => {}
            other => panic!("expected out-of-order error, got {other:?}"),
        }
        // A repeated index is just as fatal as a backwards one.
        let frames = vec![
            manual_frame(7, FrameKind::Data, vec![100]),
            manual_frame(7, FrameKind::Data, vec![100]),
        ];
        assert!(matches!(
            run_stream(&config, ok_frames(frames), None),
            Err(Error::OutOfOrderFrame { previous: 7, got: 7 })
        ));
    }

    #[test]
    fn wrong_area_count_is_rejected() {
        let config = PipelineConfig::single_ion_camera(1);
        let frames = vec![manual_frame(0, FrameKind::Data, vec![100, 200])];
        assert!(matches!(
            run_stream(&config, ok_frames(frames), None),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn fixed_seed_reruns_are_bit_identical() {
        let config = PipelineConfig::two_ion_global_camera(77);
        let scenario = SourceScenario {
            preparation: Preparation::Superposition,
            shots: 300,
        };
        let detectors = IonDetectors::Emccd(vec![two_ion_camera_model(); 2]);

        let run = |seed: u64| {
            let config = PipelineConfig {
                seed,
                ..config.clone()
            };
            let source =
                simulate_source(&config, scenario, detectors.clone(), camera_depumping()).unwrap();
            run_stream(&config, source, None).unwrap()
        };
        // Bit-identical decisions; only the measured latencies may vary.
        let content = |o: &StreamOutcome| -> Vec<(u64, Vec<QubitState>, Option<u8>)> {
            o.decisions
                .iter()
                .map(|d| (d.sequence_index, d.per_ion_state.clone(), d.global_bright))
                .collect()
        };
        let first = run(77);
        let second = run(77);
        assert_eq!(content(&first), content(&second));
        assert_eq!(first.summary.frames_in, second.summary.frames_in);
        assert_eq!(
            first.summary.cleaning_frames,
            second.summary.cleaning_frames
        );
        // A different seed must not replay the same count stream.
        let third = run(78);
        assert_ne!(content(&first), content(&third));
    }

    #[test]
    fn global_scheme_reports_bright_ion_count_only() {
        let config = PipelineConfig::two_ion_global_camera(5);
        let detectors = IonDetectors::Emccd(vec![two_ion_camera_model(); 2]);
        let run = |preparation| {
            let source = simulate_source(
                &config,
                SourceScenario {
                    preparation,
                    shots: 600,
                },
                detectors.clone(),
                camera_depumping(),
            )
            .unwrap();
            run_stream(&config, source, None).unwrap()
        };

        let dark = run(Preparation::AllDark);
        let zeros = dark
            .decisions
            .iter()
            .filter(|d| d.global_bright == Some(0))
            .count();
        assert!(zeros >= 570, "only {zeros} of 600 dark shots read zero");

        let bright = run(Preparation::AllBright);
        let twos = bright
            .decisions
            .iter()
            .filter(|d| d.global_bright == Some(2))
            .count();
        assert!(twos >= 570, "only {twos} of 600 bright shots read two");

        for d in dark.decisions.iter().chain(&bright.decisions) {
            assert!(d.per_ion_state.is_empty());
            assert!(d.global_bright.is_some());
        }
    }

    #[test]
    fn superposition_splits_into_quarters_per_ion() {
        let config = PipelineConfig {
            thresholds: ThresholdScheme::PerIon(vec![CAMERA_THRESHOLD; 2]),
            ..PipelineConfig::single_ion_camera(11)
        };
        let detectors = IonDetectors::Emccd(vec![camera_model(); 2]);
        let source = simulate_source(
            &config,
            SourceScenario {
                preparation: Preparation::Superposition,
                shots: 4_000,
            },
            detectors,
            camera_depumping(),
        )
        .unwrap();
        let outcome = run_stream(&config, source, None).unwrap();

        let mut joint = [0u64; 4];
        for d in &outcome.decisions {
            let a = (d.per_ion_state[0] == QubitState::Bright) as usize;
            let b = (d.per_ion_state[1] == QubitState::Bright) as usize;
            joint[2 * a + b] += 1;
        }
        // Binomial(4000, 1/4) has sd ~27; allow five.
        for (i, &cell) in joint.iter().enumerate() {
            assert!(
                (cell as f64 - 1_000.0).abs() < 140.0,
                "joint cell {i} holds {cell} of 4000"
            );
        }
    }

    #[test]
    fn bright_only_mean_matches_the_calibrated_chain() {
        let config = PipelineConfig::single_ion_camera(29);
        let model = camera_model();
        let source = simulate_source(
            &config,
            SourceScenario {
                preparation: Preparation::AllBright,
                shots: 2_000,
            },
            IonDetectors::Emccd(vec![model]),
            DepumpingSpec::none(),
        )
        .unwrap();
        let frames: Vec<FrameRecord> = source.map(|f| f.unwrap()).collect();
        let data: Vec<f64> = frames
            .iter()
            .filter(|f| f.kind == FrameKind::Data)
            .map(|f| f.area_counts[0] as f64)
            .collect();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let expected = model.mean_counts(QubitState::Bright);
        // Per-shot sd is ~610 counts; five sigma of the 2000-shot mean.
        assert!(
            (mean - expected).abs() < 70.0,
            "mean {mean} vs calibrated {expected}"
        );
    }

    #[test]
    fn limits_and_losslessness() {
        let config = PipelineConfig {
            latency_budget_ns: 0,
            ..PipelineConfig::single_ion_camera(3)
        };
        let scenario = SourceScenario {
            preparation: Preparation::Alternating,
            shots: 50,
        };
        let detectors = IonDetectors::Emccd(vec![camera_model()]);
        let source =
            simulate_source(&config, scenario, detectors.clone(), camera_depumping()).unwrap();
        let outcome = run_stream(&config, source, Some(7)).unwrap();
        assert_eq!(outcome.summary.frames_in, 7);

        // Data frames in = decisions out, budget violations or not.
        let source = simulate_source(&config, scenario, detectors, camera_depumping()).unwrap();
        let outcome = run_stream(&config, source, None).unwrap();
        assert_eq!(outcome.decisions.len(), 50);
        assert_eq!(
            outcome.summary.budget_met,
            outcome.summary.budget_violations == 0
        );
        let indices: Vec<u64> = outcome.decisions.iter().map(|d| d.sequence_index).collect();
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn summary_statistics_use_nearest_rank() {
        let s = summarize(&[5, 1, 3], 3, 6, 3);
        assert_eq!(s.max_latency_ns, 5);
        assert_eq!(s.mean_latency_ns, 3.0);
        assert_eq!(s.p99_latency_ns, 5);
        assert_eq!(s.budget_violations, 1);
        assert!(!s.budget_met);
        assert_eq!(s.frames_in, 6);
        assert_eq!(s.cleaning_frames, 3);

        let lat: Vec<u64> = (1..=100).collect();
        let s = summarize(&lat, 1_000, 100, 0);
        assert_eq!(s.p99_latency_ns, 99);
        assert!(s.budget_met);

        let empty = summarize(&[], 10, 4, 4);
        assert_eq!(empty.max_latency_ns, 0);
        assert_eq!(empty.mean_latency_ns, 0.0);
        assert!(empty.budget_met);
    }

    #[test]
    fn ndjson_round_trip_and_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.ndjson");
        let frames = vec![
            manual_frame(0, FrameKind::Cleaning, vec![9_000]),
            manual_frame(1, FrameKind::Data, vec![10_500]),
            manual_frame(2, FrameKind::Data, vec![640]),
        ];
        write_frames_path(&path, &frames).unwrap();
        assert_eq!(read_frames_path(&path).unwrap(), frames);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"cleaning\""));

        let broken = path.with_file_name("broken.ndjson");
        std::fs::write(&broken, "{\"sequence_index\":0}\n").unwrap();
        match read_frames_path(&broken) {
            Err(Error::Format(msg)) => assert!(msg.contains("line 1"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn frames_stream_over_a_local_socket() {
        use std::os::unix::net::{UnixListener, UnixStream};

        let dir = tempfile::tempdir().unwrap();
        let sock = dir.path().join("frames.sock");
        let listener = UnixListener::bind(&sock).unwrap();

        let config = PipelineConfig::single_ion_camera(13);
        let scenario = SourceScenario {
            preparation: Preparation::Alternating,
            shots: 40,
        };
        let detectors = IonDetectors::Emccd(vec![camera_model()]);
        let frames: Vec<FrameRecord> =
            simulate_source(&config, scenario, detectors, camera_depumping())
                .unwrap()
                .map(|f| f.unwrap())
                .collect();

        let served = frames.clone();
        let server = thread::spawn(move || {
            let (mut conn, _) = listener.accept().unwrap();
            write_ndjson_frames(&mut conn, &served).unwrap();
        });

        let conn = UnixStream::connect(&sock).unwrap();
        let outcome = run_stream(&config, ndjson_frames(conn), None).unwrap();
        server.join().unwrap();

        assert_eq!(outcome.summary.frames_in, 80);
        assert_eq!(outcome.decisions.len(), 40);
        for (decision, frame) in outcome
            .decisions
            .iter()
            .zip(frames.iter().filter(|f| f.kind == FrameKind::Data))
        {
            let offline = classify(frame.area_counts[0], CAMERA_THRESHOLD);
            assert_eq!(decision.per_ion_state, vec![offline]);
        }
    }

    #[test]
    fn config_validation_rejects_bad_setups() {
        let good = PipelineConfig::single_ion_camera(0);
        assert!(good.validate().is_ok());
        assert!(PipelineConfig::two_ion_global_camera(0).validate().is_ok());

        let mut c = good.clone();
        c.frame_rate_hz = 0.0;
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.frame_rate_hz = 250.0; // above the 200/s duty limit
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.latency_budget_ns = 5_000_000; // equals the frame period
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.thresholds = ThresholdScheme::PerIon(vec![]);
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.thresholds = ThresholdScheme::TwoIonGlobal {
            lower: 80,
            upper: 80,
        };
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.areas = vec![
            BinningArea::new(0, 0, 10, 10),
            BinningArea::new(5, 5, 10, 10),
        ];
        c.thresholds = ThresholdScheme::PerIon(vec![10, 10]);
        assert!(matches!(c.validate(), Err(Error::OverlappingAreas(_))));

        let mut c = good.clone();
        c.areas = vec![BinningArea::new(0, 0, 10, 10)]; // one area, two thresholds
        c.thresholds = ThresholdScheme::PerIon(vec![10, 10]);
        assert!(c.validate().is_err());

        let mut c = good;
        c.buffer_depth = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn source_validation_rejects_mismatched_models() {
        let config = PipelineConfig::single_ion_camera(1);
        let scenario = SourceScenario {
            preparation: Preparation::AllDark,
            shots: 1,
        };
        // Two models for one threshold.
        let err = simulate_source(
            &config,
            scenario,
            IonDetectors::Emccd(vec![camera_model(); 2]),
            camera_depumping(),
        );
        assert!(err.is_err());
        // Global scheme with one model.
        let config = PipelineConfig::two_ion_global_camera(1);
        let err = simulate_source(
            &config,
            scenario,
            IonDetectors::Emccd(vec![camera_model()]),
            camera_depumping(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn pmt_sources_emit_data_frames_only() {
        let config = PipelineConfig {
            thresholds: ThresholdScheme::PerIon(vec![crate::calibration::PMT_THRESHOLD]),
            ..PipelineConfig::single_ion_camera(9)
        };
        let source = simulate_source(
            &config,
            SourceScenario {
                preparation: Preparation::Alternating,
                shots: 30,
            },
            IonDetectors::Pmt(vec![crate::calibration::pmt_model()]),
            crate::calibration::pmt_depumping(),
        )
        .unwrap();
        let frames: Vec<FrameRecord> = source.map(|f| f.unwrap()).collect();
        assert_eq!(frames.len(), 30);
        assert!(frames.iter().all(|f| f.kind == FrameKind::Data));
        let outcome = run_stream(&config, ok_frames(frames), None).unwrap();
        assert_eq!(outcome.decisions.len(), 30);
        assert_eq!(outcome.summary.cleaning_frames, 0);
    }
}
