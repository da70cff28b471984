//! Threshold state discrimination and readout-error bookkeeping.
//!
//! Classification is a simple threshold test: a count at or above the
//! threshold reads as bright. The combined state-preparation-and-
//! measurement (SPAM) error of a threshold is estimated from reference
//! histograms taken with the ion deliberately prepared bright and dark:
//! every bright-prepared shot below the threshold and every dark-prepared
//! shot at or above it counts as an error.

use serde::{Deserialize, Serialize};

use crate::detector::QubitState;
use crate::error::{Error, Result};
use crate::hist::CountHistogram;
use crate::numeric::Fraction;

/// Classify a single count: at or above `threshold` reads bright.
pub fn classify(count: u64, threshold: u64) -> QubitState {
    if count >= threshold {
        QubitState::Bright
    } else {
        QubitState::Dark
    }
}

/// Classify one count per ion against per-ion thresholds.
pub fn classify_counts(counts: &[u64], thresholds: &[u64]) -> Result<Vec<QubitState>> {
    if counts.len() != thresholds.len() {
        return Err(Error::invalid(format!(
            "got {} counts for {} thresholds",
            counts.len(),
            thresholds.len()
        )));
    }
    Ok(counts
        .iter()
        .zip(thresholds)
        .map(|(&c, &t)| classify(c, t))
        .collect())
}

/// Classify a summed two-ion count into the number of bright ions:
/// below `thresholds.0` none, below `thresholds.1` one, otherwise two.
pub fn classify_global(count: u64, thresholds: (u64, u64)) -> Result<u8> {
    let (t1, t2) = thresholds;
    if t1 >= t2 {
        return Err(Error::invalid(format!(
            "global thresholds must increase, got {t1} >= {t2}"
        )));
    }
    Ok(if count < t1 {
        0
    } else if count < t2 {
        1
    } else {
        2
    })
}

/// Fraction of a histogram's shots classified bright at a threshold.
pub fn bright_fraction(hist: &CountHistogram, threshold: u64) -> Result<f64> {
    if hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    Ok(hist.mass_at_or_above(threshold) as f64 / hist.total() as f64)
}

/// Combined readout error of a threshold against bright/dark reference
/// histograms: bright shots below the threshold plus dark shots at or
/// above it, over all shots.
pub fn spam_error(bright: &CountHistogram, dark: &CountHistogram, threshold: u64) -> Result<f64> {
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let errors = bright.mass_below(threshold) + dark.mass_at_or_above(threshold);
    Ok(errors as f64 / (bright.total() + dark.total()) as f64)
}

/// True when a camera threshold sits at or below the firmware clamp
/// level, where the pile-up of clamped readouts perturbs the error curve
/// and the optimum cannot be trusted.
pub fn threshold_in_clamp_spike(threshold: u64, bias: u64) -> bool {
    threshold <= bias
}

/// Evaluate [`spam_error`] at every threshold in the inclusive range.
///
/// The curve rises to 50% at both ends for equal shot counts and is
/// discontinuous wherever a histogram has an isolated pile-up, such as
/// the camera clamp spike at the bias count.
pub fn spam_curve(
    bright: &CountHistogram,
    dark: &CountHistogram,
    thresholds: std::ops::RangeInclusive<u64>,
) -> Result<Vec<ThresholdScan>> {
    if thresholds.is_empty() {
        return Err(Error::invalid("empty threshold range"));
    }
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    thresholds
        .map(|t| {
            spam_error(bright, dark, t).map(|error| ThresholdScan {
                threshold: t,
                error,
            })
        })
        .collect()
}

/// Result of a threshold optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub threshold: u64,
    pub error: f64,
}

/// Find the threshold minimizing [`spam_error`].
///
/// The error is piecewise constant in the threshold and only changes at
/// observed counts, so scanning `t = c` and `t = c + 1` for every count
/// `c` present in either histogram visits every distinct value in one
/// cumulative pass. Ties resolve to the smallest threshold.
pub fn optimal_threshold(bright: &CountHistogram, dark: &CountHistogram) -> Result<ThresholdScan> {
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let total = (bright.total() + dark.total()) as f64;
    let mut counts: Vec<u64> = bright.iter().map(|(c, _)| c).collect();
    counts.extend(dark.iter().map(|(c, _)| c));
    counts.sort_unstable();
    counts.dedup();

    // Running error numerator for "threshold = c": bright mass strictly
    // below c plus dark mass at or above c.
    let mut bright_below = 0u64;
    let mut dark_at_or_above = dark.total();
    let mut best = ThresholdScan {
        threshold: counts[0],
        error: f64::INFINITY,
    };
    for &c in &counts {
        let at_c = spam_numerator(bright_below, dark_at_or_above);
        consider(&mut best, c, at_c, total);
        // Threshold c + 1: count c flips sides.
        bright_below += bright.occurrences(c);
        dark_at_or_above -= dark.occurrences(c);
        let above_c = spam_numerator(bright_below, dark_at_or_above);
        consider(&mut best, c + 1, above_c, total);
    }
    Ok(best)
}

fn spam_numerator(bright_below: u64, dark_at_or_above: u64) -> u64 {
    bright_below + dark_at_or_above
}

fn consider(best: &mut ThresholdScan, threshold: u64, numerator: u64, total: f64) {
    let error = numerator as f64 / total;
    if error < best.error {
        *best = ThresholdScan { threshold, error };
    }
}

/// Intended two-ion preparation for a preparation-error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoIonPreparation {
    BothDark,
    /// Each ion in an equal superposition: expected populations 1/4, 1/2,
    /// 1/4 over zero, one, two bright.
    Superposition,
    BothBright,
}

impl TwoIonPreparation {
    /// Target populations over (zero, one, two) bright ions, in quarters
    /// of the shot count.
    pub fn target_quarters(self) -> [u64; 3] {
        match self {
            TwoIonPreparation::BothDark => [4, 0, 0],
            TwoIonPreparation::Superposition => [1, 2, 1],
            TwoIonPreparation::BothBright => [0, 0, 4],
        }
    }
}

/// Preparation error of a measured (zero, one, two)-bright population
/// against the target composition: half the total variation distance,
/// `sum_i |measured_i - target_i| / (2 N)`, computed exactly.
pub fn preparation_error(measured: [u64; 3], target: TwoIonPreparation) -> Result<Fraction> {
    let shots: u64 = measured.iter().sum();
    if shots == 0 {
        return Err(Error::invalid("preparation error needs at least one shot"));
    }
    let quarters = target.target_quarters();
    // |m_i - q_i N / 4| = |4 m_i - q_i N| / 4, so the exact error is
    // sum |4 m_i - q_i N| / (8 N).
    let numerator: u128 = measured
        .iter()
        .zip(quarters)
        .map(|(&m, q)| (4 * m as i128 - (q as i128) * (shots as i128)).unsigned_abs())
        .sum();
    Ok(Fraction::new(numerator, 8 * shots as u128))
}

/// Tally of two-ion joint readout outcomes.
///
/// Outcome order is (dark, dark), (dark, bright), (bright, dark),
/// (bright, bright), first ion first. Abundances and marginals are exact
/// fractions of `denominator`: the shot count when tallied from
/// classifications, or 1000 when built from printed per-mille abundances
/// so that sums of quoted table percentages reproduce digit for digit
/// instead of being renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointOutcomes {
    pub counts: [u64; 4],
    pub denominator: u64,
}

impl JointOutcomes {
    /// Build from printed abundances quoted in tenths of a percent,
    /// e.g. 25.4% enters as 254.
    pub fn from_abundance_tenths(tenths: [u64; 4]) -> Self {
        JointOutcomes {
            counts: tenths,
            denominator: 1000,
        }
    }

    /// Relative abundance of each joint outcome.
    pub fn abundances(&self) -> [Fraction; 4] {
        self.counts
            .map(|c| Fraction::new(c as u128, self.denominator as u128))
    }

    /// Probability that the given ion (0 or 1) reads dark: the sum of the
    /// two outcomes with that ion dark.
    pub fn marginal_dark(&self, ion: usize) -> Fraction {
        let sum = match ion {
            0 => self.counts[0] + self.counts[1],
            1 => self.counts[0] + self.counts[2],
            _ => panic!("two-ion table has ions 0 and 1, got {ion}"),
        };
        Fraction::new(sum as u128, self.denominator as u128)
    }
}

/// Tally joint outcomes from per-shot (first ion, second ion) states.
pub fn joint_outcomes(classifications: &[(QubitState, QubitState)]) -> Result<JointOutcomes> {
    if classifications.is_empty() {
        return Err(Error::invalid("no classifications to tally"));
    }
    let mut counts = [0u64; 4];
    for &(a, b) in classifications {
        let index = 2 * (a == QubitState::Bright) as usize + (b == QubitState::Bright) as usize;
        counts[index] += 1;
    }
    Ok(JointOutcomes {
        counts,
        denominator: classifications.len() as u64,
    })
}

/// Stray-light estimate from per-area mean counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkEstimate {
    /// Mean counts above the dark reference landing outside the own area.
    pub crosstalk_counts: f64,
    /// Those counts as a fraction of the excess over all areas.
    pub crosstalk_fraction: f64,
    /// Set when some area measured brighter dark than bright; such an
    /// excess is a statistical fluctuation (or a calibration problem) and
    /// is clamped to zero in the estimate.
    pub negative_excess: bool,
}

/// Estimate readout crosstalk from mean area counts measured with a
/// single ion prepared bright and dark in turn.
///
/// Each area's excess is its bright-preparation mean minus its
/// dark-preparation mean, so any common background cancels. The
/// crosstalk counts are the excess outside `own_area`, and the fraction
/// divides them by the excess summed over all areas. Negative excesses
/// are clamped to zero and flagged.
pub fn crosstalk_estimate(
    bright_area_means: &[f64],
    dark_area_means: &[f64],
    own_area: usize,
) -> Result<CrosstalkEstimate> {
    if bright_area_means.len() != dark_area_means.len() {
        return Err(Error::invalid(format!(
            "got {} bright-preparation means for {} dark-preparation means",
            bright_area_means.len(),
            dark_area_means.len()
        )));
    }
    if bright_area_means.len() < 2 {
        return Err(Error::invalid("crosstalk needs at least two areas"));
    }
    if own_area >= bright_area_means.len() {
        return Err(Error::invalid(format!(
            "own area {own_area} out of range for {} areas",
            bright_area_means.len()
        )));
    }
    let mut stray = 0.0;
    let mut total = 0.0;
    let mut negative_excess = false;
    for (area, (&b, &d)) in bright_area_means.iter().zip(dark_area_means).enumerate() {
        let excess = b - d;
        if excess < 0.0 {
            negative_excess = true;
        }
        let clamped = excess.max(0.0);
        total += clamped;
        if area != own_area {
            stray += clamped;
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid(
            "no area shows positive excess over the dark reference",
        ));
    }
    Ok(CrosstalkEstimate {
        crosstalk_counts: stray,
        crosstalk_fraction: stray / total,
        negative_excess,
    })
}

/// Find the summed-count threshold pair minimizing the total preparation
/// error over the three reference preparations (both dark, equal
/// superposition, both bright).
///
/// Exhaustive over every distinct pair of candidate thresholds; the
/// error only changes where a histogram has mass, so candidates are each
/// observed count and its successor. Ties resolve to the smallest pair.
pub fn optimal_global_thresholds(
    dark: &CountHistogram,
    superposition: &CountHistogram,
    bright: &CountHistogram,
) -> Result<((u64, u64), f64)> {
    if dark.is_empty() || superposition.is_empty() || bright.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let mut candidates: Vec<u64> = Vec::new();
    for hist in [dark, superposition, bright] {
        for (count, _) in hist.iter() {
            candidates.push(count);
            candidates.push(count + 1);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    // Cumulative mass strictly below each candidate, per preparation.
    let below = |hist: &CountHistogram| -> Vec<u64> {
        candidates.iter().map(|&t| hist.mass_below(t)).collect()
    };
    let below_dark = below(dark);
    let below_sup = below(superposition);
    let below_bright = below(bright);

    let mut best: Option<((u64, u64), f64)> = None;
    for i in 0..candidates.len() {
        for j in (i + 1)..candidates.len() {
            let split =
                |below: &[u64], total: u64| -> [u64; 3] {
                    [below[i], below[j] - below[i], total - below[j]]
                };
            let error = preparation_error(
                split(&below_dark, dark.total()),
                TwoIonPreparation::BothDark,
            )?
            .as_f64()
                + preparation_error(
                    split(&below_sup, superposition.total()),
                    TwoIonPreparation::Superposition,
                )?
                .as_f64()
                + preparation_error(
                    split(&below_bright, bright.total()),
                    TwoIonPreparation::BothBright,
                )?
                .as_f64();
            if best.is_none_or(|(_, e)| error < e) {
                best = Some(((candidates[i], candidates[j]), error));
            }
        }
    }
    Ok(best.expect("non-empty histograms yield candidates"))
}
