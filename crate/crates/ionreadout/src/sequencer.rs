//! Experiment timelines, camera duty limits, throughput, and latency.
//!
//! One shot of the experiment is an ordered list of timed segments:
//! Doppler cooling, cooling with repump light, microwave manipulation,
//! and detection. Camera detection brackets the detection window with
//! two sensor readouts: a cleaning readout just before (flushing charge
//! accumulated since the last readout, mostly from cooling light) and
//! the data readout just after. Each readout costs about 2 ms and the
//! sensor sustains only a bounded readout rate, so the camera, not the
//! ion, limits throughput.
//!
//! Durations are integer nanoseconds throughout: schedule sums are
//! exact, with no float drift.
//!
//! The steady-state throughput model amortizes readouts two ways. The
//! cleaning readout runs concurrently with the cooling block (it needs
//! no detection light, and any charge cooling adds afterwards is flushed
//! by design). And when several detections share one cooling block, the
//! data readout of each cycle doubles as the cleaning readout of the
//! next, so k detections cost k+1 readouts. Both are required by the
//! published rates: two images per second-half at 200 readouts per
//! second supports exactly 100 experiments per second, climbing towards
//! 200 as detections per cooling block grow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Doppler cooling block duration.
pub const COOL_NS: u64 = 5_000_000;
/// Cooling-with-repump block duration.
pub const COOL_WITH_REPUMP_NS: u64 = 1_000_000;
/// Detection window duration.
pub const DETECT_NS: u64 = 400_000;
/// Camera readout duration (cleaning and data readouts alike).
pub const READOUT_NS: u64 = 2_000_000;

/// What a timeline segment does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Cool,
    CoolWithRepump,
    MicrowavePulse,
    CleanReadout,
    Detect,
    Readout,
    Idle,
}

/// One timed slot of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSegment {
    pub kind: SegmentKind,
    pub duration_ns: u64,
    pub label: String,
}

impl SequenceSegment {
    pub fn new(kind: SegmentKind, duration_ns: u64, label: impl Into<String>) -> Result<Self> {
        if duration_ns == 0 {
            return Err(Error::invalid("segment duration must be positive"));
        }
        Ok(SequenceSegment {
            kind,
            duration_ns,
            label: label.into(),
        })
    }

    /// A detection window at the standard duration.
    pub fn detect() -> Self {
        SequenceSegment::new(SegmentKind::Detect, DETECT_NS, "detect").unwrap()
    }

    /// A data readout at the standard duration.
    pub fn readout() -> Self {
        SequenceSegment::new(SegmentKind::Readout, READOUT_NS, "readout").unwrap()
    }

    /// A cleaning readout at the standard duration.
    pub fn clean_readout() -> Self {
        SequenceSegment::new(SegmentKind::CleanReadout, READOUT_NS, "clean").unwrap()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ns as f64 * 1e-9
    }
}

/// Which detector the sequence reads out on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Pmt,
    Emccd,
}

/// An ordered sequence of segments for one experimental shot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceTimeline {
    pub segments: Vec<SequenceSegment>,
    pub detector: DetectorKind,
}

impl SequenceTimeline {
    pub fn new(segments: Vec<SequenceSegment>, detector: DetectorKind) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("a timeline needs at least one segment"));
        }
        for s in &segments {
            if s.duration_ns == 0 {
                return Err(Error::invalid("segment duration must be positive"));
            }
        }
        Ok(SequenceTimeline { segments, detector })
    }

    /// Exact sum of segment durations.
    pub fn total_duration_ns(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.total_duration_ns() as f64 * 1e-9
    }

    /// Summed duration of every segment of one kind.
    pub fn duration_of(&self, kind: SegmentKind) -> u64 {
        self.segments
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.duration_ns)
            .sum()
    }

    fn readout_count(&self) -> u64 {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::CleanReadout | SegmentKind::Readout))
            .count() as u64
    }
}

/// The published single-shot sequence: cooling, repump cooling, the
/// given microwave pulses, then camera detection bracketed by a
/// cleaning and a data readout, or bare PMT detection.
pub fn build_standard_sequence(
    pulse_durations_ns: &[u64],
    detector: DetectorKind,
) -> Result<SequenceTimeline> {
    let mut segments = vec![
        SequenceSegment::new(SegmentKind::Cool, COOL_NS, "cool")?,
        SequenceSegment::new(SegmentKind::CoolWithRepump, COOL_WITH_REPUMP_NS, "repump cool")?,
    ];
    for (i, &d) in pulse_durations_ns.iter().enumerate() {
        segments.push(SequenceSegment::new(
            SegmentKind::MicrowavePulse,
            d,
            format!("pulse {}", i + 1),
        )?);
    }
    match detector {
        DetectorKind::Emccd => {
            segments.push(SequenceSegment::clean_readout());
            segments.push(SequenceSegment::detect());
            segments.push(SequenceSegment::readout());
        }
        DetectorKind::Pmt => segments.push(SequenceSegment::detect()),
    }
    SequenceTimeline::new(segments, detector)
}

/// The camera's sustained readout-rate limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraDutyModel {
    /// Sustainable readouts per second at the operating temperature.
    pub max_readout_rate: f64,
    /// Duration of one readout in seconds.
    pub readout_time_s: f64,
}

impl CameraDutyModel {
    pub fn new(max_readout_rate: f64, readout_time_s: f64) -> Result<Self> {
        let duty = CameraDutyModel {
            max_readout_rate,
            readout_time_s,
        };
        duty.validate()?;
        Ok(duty)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_readout_rate.is_finite() && self.max_readout_rate > 0.0) {
            return Err(Error::invalid("max_readout_rate must be positive"));
        }
        if !(self.readout_time_s.is_finite() && self.readout_time_s > 0.0) {
            return Err(Error::invalid("readout_time must be positive"));
        }
        if self.max_readout_rate * self.readout_time_s > 1.0 {
            return Err(Error::invalid(format!(
                "{} readouts/s of {} s each exceed unity duty",
                self.max_readout_rate, self.readout_time_s
            )));
        }
        Ok(())
    }
}

/// Steady-state rates of a repeated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    /// Detections sharing one cooling block.
    pub detections_per_cooling: u64,
    /// Steady-state period of one cooling block plus its detections.
    pub period_ns: f64,
    /// Idle padding inserted per period to respect the duty limit.
    pub idle_ns: f64,
    pub experiments_per_second: f64,
    pub readouts_per_second: f64,
}

/// Steady-state throughput of the timeline generalized to
/// `detections_per_cooling` manipulate/detect/readout cycles per cooling
/// block.
///
/// The timeline provides the per-segment durations of a single cycle.
/// The cleaning readout hides inside the cooling block (whichever is
/// longer bounds the period) and each data readout doubles as the next
/// cycle's cleaning, so k detections take k+1 readouts. If that readout
/// rate would exceed the duty limit, idle time pads the period; the
/// reported rates are exact arithmetic on integer nanosecond durations.
pub fn throughput(
    timeline: &SequenceTimeline,
    duty: &CameraDutyModel,
    detections_per_cooling: u64,
) -> Result<Throughput> {
    duty.validate()?;
    if detections_per_cooling == 0 {
        return Err(Error::invalid("need at least one detection per cooling block"));
    }
    let k = detections_per_cooling;
    let cooling =
        timeline.duration_of(SegmentKind::Cool) + timeline.duration_of(SegmentKind::CoolWithRepump);
    let manipulation = timeline.duration_of(SegmentKind::MicrowavePulse);
    let detect = timeline.duration_of(SegmentKind::Detect);
    let clean = timeline.duration_of(SegmentKind::CleanReadout);
    let readout = timeline.duration_of(SegmentKind::Readout);
    if detect == 0 {
        return Err(Error::invalid("timeline has no Detect segment"));
    }
    if timeline.detector == DetectorKind::Emccd && readout == 0 {
        return Err(Error::invalid("camera timeline has no data Readout segment"));
    }
    let raw_ns = cooling.max(clean) + k * (manipulation + detect + readout);
    match timeline.detector {
        DetectorKind::Pmt => Ok(Throughput {
            detections_per_cooling: k,
            period_ns: raw_ns as f64,
            idle_ns: 0.0,
            experiments_per_second: k as f64 * 1e9 / raw_ns as f64,
            readouts_per_second: 0.0,
        }),
        DetectorKind::Emccd => {
            let readouts = k + 1;
            let duty_min_ns = readouts as f64 * 1e9 / duty.max_readout_rate;
            if duty_min_ns > raw_ns as f64 {
                // Duty-bound: readouts saturate the cap exactly.
                Ok(Throughput {
                    detections_per_cooling: k,
                    period_ns: duty_min_ns,
                    idle_ns: duty_min_ns - raw_ns as f64,
                    experiments_per_second: duty.max_readout_rate * k as f64 / readouts as f64,
                    readouts_per_second: duty.max_readout_rate,
                })
            } else {
                Ok(Throughput {
                    detections_per_cooling: k,
                    period_ns: raw_ns as f64,
                    idle_ns: 0.0,
                    experiments_per_second: k as f64 * 1e9 / raw_ns as f64,
                    readouts_per_second: readouts as f64 * 1e9 / raw_ns as f64,
                })
            }
        }
    }
}

/// Time from the end of the last detection window until a classification
/// can exist: everything scheduled after that Detect up to and including
/// the first data Readout (nothing for a PMT, whose counts are already
/// digital), plus the processing time.
pub fn decision_latency(timeline: &SequenceTimeline, processing_s: f64) -> Result<f64> {
    if !(processing_s.is_finite() && processing_s >= 0.0) {
        return Err(Error::invalid("processing time must be finite and nonnegative"));
    }
    let last_detect = timeline
        .segments
        .iter()
        .rposition(|s| s.kind == SegmentKind::Detect)
        .ok_or_else(|| Error::invalid("timeline has no Detect segment"))?;
    let mut wait_ns = 0u64;
    for s in &timeline.segments[last_detect + 1..] {
        wait_ns += s.duration_ns;
        if s.kind == SegmentKind::Readout {
            break;
        }
    }
    Ok(wait_ns as f64 * 1e-9 + processing_s)
}

/// A scheduling problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    /// A camera detection without a preceding cleaning or data readout
    /// (microwave pulses in between are fine): the frame would carry
    /// charge accumulated since the previous readout.
    MissingCleaning { segment_index: usize, label: String },
    /// A camera detection not immediately followed by a data readout:
    /// the detected photoelectrons never leave the sensor.
    MissingReadout { segment_index: usize, label: String },
    /// The scheduled readouts exceed the sustainable rate.
    RateExceeded {
        readouts: u64,
        duration_ns: u64,
        max_readout_rate: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::MissingCleaning { segment_index, label } => write!(
                f,
                "detect segment {segment_index} ('{label}') has no cleaning or data readout before it"
            ),
            Violation::MissingReadout { segment_index, label } => write!(
                f,
                "detect segment {segment_index} ('{label}') is not followed by a data readout"
            ),
            Violation::RateExceeded {
                readouts,
                duration_ns,
                max_readout_rate,
            } => write!(
                f,
                "{readouts} readouts in {} s is {:.1} readouts/s, over the {max_readout_rate}/s limit",
                *duration_ns as f64 * 1e-9,
                *readouts as f64 * 1e9 / *duration_ns as f64,
            ),
        }
    }
}

/// Check a timeline against the camera's scheduling constraints.
///
/// Camera timelines must clean before and read out after every
/// detection, and the average readout rate over the whole timeline must
/// respect the duty limit. Segments run strictly one after another, so
/// a detection overlapping a readout cannot even be expressed; the
/// adjacency checks are the serialized form of that constraint. An
/// empty list means the schedule is valid.
pub fn validate(timeline: &SequenceTimeline, duty: &CameraDutyModel) -> Result<Vec<Violation>> {
    duty.validate()?;
    let mut violations = Vec::new();
    if timeline.detector == DetectorKind::Emccd {
        for (i, seg) in timeline.segments.iter().enumerate() {
            if seg.kind != SegmentKind::Detect {
                continue;
            }
            let cleaned = timeline.segments[..i]
                .iter()
                .rev()
                .find(|s| s.kind != SegmentKind::MicrowavePulse)
                .is_some_and(|s| {
                    matches!(s.kind, SegmentKind::CleanReadout | SegmentKind::Readout)
                });
            if !cleaned {
                violations.push(Violation::MissingCleaning {
                    segment_index: i,
                    label: seg.label.clone(),
                });
            }
            let read_out = timeline
                .segments
                .get(i + 1)
                .is_some_and(|s| s.kind == SegmentKind::Readout);
            if !read_out {
                violations.push(Violation::MissingReadout {
                    segment_index: i,
                    label: seg.label.clone(),
                });
            }
        }
    }
    let readouts = timeline.readout_count();
    if readouts > 0 {
        let duration_ns = timeline.total_duration_ns();
        let rate = readouts as f64 * 1e9 / duration_ns as f64;
        if rate > duty.max_readout_rate {
            violations.push(Violation::RateExceeded {
                readouts,
                duration_ns,
                max_readout_rate: duty.max_readout_rate,
            });
        }
    }
    Ok(violations)
}
