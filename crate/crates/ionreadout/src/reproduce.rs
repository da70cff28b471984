//! Regeneration of the published reference values.
//!
//! Each section recomputes one published result from committed inputs (the
//! reference measurement tables in [`crate::refdata`], the calibrated
//! models, fixed seeds) and compares it against the published value. The
//! `reproduce` CLI command renders the resulting [`Report`] and exits
//! nonzero when any check fails, so drift between the models and the
//! reference measurements cannot pass silently.

use serde::{Deserialize, Serialize};

use crate::calibration;
use crate::detector::{emccd_histogram, QubitState};
use crate::discriminator::{
    crosstalk_estimate, preparation_error, spam_error, JointOutcomes,
};
use crate::error::Result;
use crate::fitters::envelope_minimum_from_pi_times;
use crate::refdata;
use crate::refdata::matches_printed;
use crate::sequencer::{build_standard_sequence, throughput, DetectorKind};

/// Beat-envelope minimum implied by the published pi-times, as the product
/// over the difference of 2.83557 us and 2.84904 us. Computed by hand from
/// those constants and frozen; guards the arithmetic independently of the
/// code under test.
const BEAT_MINIMUM_ORACLE_S: f64 = 599.751_473_853_016_9e-6;

/// One computed-versus-published comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Stable dotted identifier, e.g. `table1.pmt.dark`.
    pub name: String,
    /// Rendered computed value.
    pub computed: String,
    /// Rendered published value.
    pub reference: String,
    /// How the two were compared.
    pub detail: String,
    pub passed: bool,
    /// Set when the comparison runs under a documented ambiguity in the
    /// published table rather than directly against the printed value.
    pub flagged: bool,
}

impl Check {
    fn exact(name: &str, computed: String, reference: String, detail: &str, passed: bool) -> Check {
        Check {
            name: name.to_string(),
            computed,
            reference,
            detail: detail.to_string(),
            passed,
            flagged: false,
        }
    }
}

/// A full reproduction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: status, name, computed, published, method.
    /// `PASS*` marks a check that passed under a documented ambiguity.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut flagged_any = false;
        for c in &self.checks {
            let status = match (c.passed, c.flagged) {
                (true, false) => "PASS ",
                (true, true) => "PASS*",
                (false, _) => "FAIL ",
            };
            flagged_any |= c.passed && c.flagged;
            out.push_str(&format!(
                "{status} {:<30} computed {:<18} published {:<16} {}\n",
                c.name, c.computed, c.reference, c.detail
            ));
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        out.push_str(&format!("{passed} of {} checks passed\n", self.checks.len()));
        if flagged_any {
            out.push_str("PASS* = agrees under a documented ambiguity in the published table\n");
        }
        out
    }
}

fn fmt_measured(m: &refdata::Measured, unit: &str) -> String {
    format!("{} ± {}{unit}", m.value, m.sd)
}

/// The six two-ion preparation error rates, recomputed in exact integer
/// arithmetic from the published occurrence triples.
pub fn table1_checks() -> Vec<Check> {
    refdata::TWO_ION_PREPARATIONS
        .iter()
        .map(|row| {
            let error = preparation_error(row.occurrences, row.preparation)
                .expect("published occurrence triples are nonempty");
            let computed = error.percent_string(3);
            let passed = computed == row.printed_error_percent;
            let detector = match row.detector {
                DetectorKind::Pmt => "pmt",
                DetectorKind::Emccd => "camera",
            };
            let preparation = match row.preparation {
                crate::discriminator::TwoIonPreparation::BothDark => "dark",
                crate::discriminator::TwoIonPreparation::Superposition => "superposition",
                crate::discriminator::TwoIonPreparation::BothBright => "bright",
            };
            Check::exact(
                &format!("table1.{detector}.{preparation}"),
                format!("{computed} %"),
                format!("{} %", row.printed_error_percent),
                "exact printed digits",
                passed,
            )
        })
        .collect()
}

/// The two per-ion dark-state marginals from the published joint
/// abundances, exact to the printed digit.
pub fn table2_checks() -> Vec<Check> {
    let joint = JointOutcomes::from_abundance_tenths(refdata::JOINT_ABUNDANCE_TENTHS);
    (0..2)
        .map(|ion| {
            let computed = joint.marginal_dark(ion).percent_string(1);
            let reference = refdata::PRINTED_MARGINAL_DARK_PERCENT[ion];
            Check::exact(
                &format!("table2.marginal_dark.ion{}", ion + 1),
                format!("{computed} %"),
                format!("{reference} %"),
                "exact printed digits; the 0.1 % shortfall to 100 % is print rounding",
                computed == reference,
            )
        })
        .collect()
}

/// Crosstalk counts and fractions recomputed from the published area
/// means. Large-separation rows compare directly; the printed fractions of
/// the small-separation rows are transposed between positions, so those
/// compare against the partner row and carry the ambiguity flag.
pub fn table3_checks() -> Vec<Check> {
    let mut checks = Vec::new();
    for (index, row) in refdata::CROSSTALK_ROWS.iter().enumerate() {
        let est = crosstalk_estimate(
            &row.bright_means.map(|m| m.value),
            &row.dark_means.map(|m| m.value),
            row.own_area,
        )
        .expect("published means are a valid estimate input");
        let sep = if row.separation_um == calibration::ION_SEPARATION_LARGE_UM {
            "large"
        } else {
            "small"
        };
        let position = row.own_area + 1;

        checks.push(Check::exact(
            &format!("table3.{sep}.position{position}.counts"),
            format!("{:.1}", est.crosstalk_counts),
            fmt_measured(&row.printed_counts, ""),
            "within one published standard deviation",
            row.printed_counts.covers(est.crosstalk_counts, 1.0),
        ));

        let percent = 100.0 * est.crosstalk_fraction;
        let target = refdata::printed_fraction_for_comparison(index);
        let (detail, flagged) = if row.printed_fraction_transposed {
            (
                "printed small-separation fractions are transposed; compared to the partner row",
                true,
            )
        } else {
            ("within one published standard deviation", false)
        };
        checks.push(Check {
            name: format!("table3.{sep}.position{position}.fraction"),
            computed: format!("{percent:.3} %"),
            reference: format!("{} %", fmt_measured(&row.printed_fraction_percent, "")),
            detail: detail.to_string(),
            passed: target.covers(percent, 1.0),
            flagged,
        });
    }
    checks
}

/// Shape of the error-versus-threshold curve for the calibrated camera:
/// exactly 50 % at both extremes and a discontinuity where the threshold
/// crosses the clamp pile-up at the bias count.
pub fn spam_shape_checks(shots: u64, seed: u64) -> Result<Vec<Check>> {
    let model = calibration::camera_model();
    let depump = calibration::camera_depumping();
    let bright = emccd_histogram(&model, QubitState::Bright, &depump, shots, seed)?;
    let dark = emccd_histogram(&model, QubitState::Dark, &depump, shots, seed ^ 1)?;

    let mut checks = Vec::new();
    let low = spam_error(&bright, &dark, 0)?;
    checks.push(Check::exact(
        "spam_curve.low_extreme",
        format!("{:.1} %", 100.0 * low),
        "50 %".into(),
        "every shot reads bright below any count",
        low == 0.5,
    ));
    let top = bright.iter().chain(dark.iter()).map(|(c, _)| c).max().unwrap_or(0);
    let high = spam_error(&bright, &dark, top + 1)?;
    checks.push(Check::exact(
        "spam_curve.high_extreme",
        format!("{:.1} %", 100.0 * high),
        "50 %".into(),
        "every shot reads dark above the largest count",
        high == 0.5,
    ));

    let bias = model.bias;
    let at_bias = spam_error(&bright, &dark, bias)?;
    let above = spam_error(&bright, &dark, bias + 1)?;
    let pile: u64 = dark
        .iter()
        .chain(bright.iter())
        .filter(|&(c, _)| c == bias)
        .map(|(_, n)| n)
        .sum();
    let jump = (above - at_bias).abs();
    checks.push(Check::exact(
        &format!("spam_curve.jump_at_{}", bias + 1),
        format!("{:.4} percentage points", 100.0 * jump),
        "discontinuity".into(),
        "clamp pile-up at the bias count shifts sides as the threshold passes it",
        pile > 0 && jump > 0.0,
    ));
    Ok(checks)
}

/// The standard-sequence timing numbers: a 10.4 ms cycle, 100 experiments
/// per second with one detection per cooling block, 200 camera readouts
/// per second, approaching 200 experiments per second as detections per
/// cooling block grow.
pub fn throughput_checks() -> Result<Vec<Check>> {
    let timeline = build_standard_sequence(&[], DetectorKind::Emccd)?;
    let duty = calibration::standard_camera_duty();

    let mut checks = Vec::new();
    let total_ms = timeline.total_duration_ns() as f64 / 1e6;
    checks.push(Check::exact(
        "sequence.cycle",
        format!("{total_ms} ms"),
        "10.4 ms".into(),
        "exact integer nanosecond sum",
        timeline.total_duration_ns() == 10_400_000,
    ));

    let single = throughput(&timeline, &duty, 1)?;
    checks.push(Check::exact(
        "throughput.experiments_per_second",
        format!("{}", single.experiments_per_second),
        "100".into(),
        "readout-rate bound with one cleaning per data image",
        single.experiments_per_second == 100.0,
    ));
    checks.push(Check::exact(
        "throughput.readouts_per_second",
        format!("{}", single.readouts_per_second),
        "200".into(),
        "exactly the camera readout limit",
        single.readouts_per_second == 200.0,
    ));

    let many = throughput(&timeline, &duty, 64)?;
    checks.push(Check::exact(
        "throughput.asymptote",
        format!("{:.3} experiments/s at 64 detections", many.experiments_per_second),
        "approaches 200".into(),
        "readout rate stays pinned at the limit while cooling amortizes",
        many.experiments_per_second >= 190.0 && many.readouts_per_second == 200.0,
    ));
    Ok(checks)
}

/// The beat-envelope minimum implied by the published pi-times: checked
/// against an independently frozen arithmetic oracle and against the
/// published "approximately 600 us".
pub fn beat_checks() -> Result<Vec<Check>> {
    let [t1, t2] = refdata::PMT_BEAT_PI_TIMES_S;
    let minimum = envelope_minimum_from_pi_times(t1.value, t2.value)?;
    let minimum_us = minimum * 1e6;

    let mut checks = Vec::new();
    let oracle_us = BEAT_MINIMUM_ORACLE_S * 1e6;
    checks.push(Check::exact(
        "beat.minimum.arithmetic",
        format!("{minimum_us:.4} us"),
        format!("{oracle_us:.4} us"),
        "frozen hand-computed oracle, 1e-9 relative",
        (minimum - BEAT_MINIMUM_ORACLE_S).abs() <= 1e-9 * BEAT_MINIMUM_ORACLE_S,
    ));
    checks.push(Check::exact(
        "beat.minimum.published",
        format!("{minimum_us:.1} us"),
        "approximately 600 us".into(),
        "rounds to the published approximate value",
        matches_printed(minimum_us, "600"),
    ));
    Ok(checks)
}

/// Run every reproduction section. `shots` controls the simulated
/// histograms behind the curve-shape checks (the published histograms used
/// 10^5); the seed feeds those simulations only, since every other section
/// is deterministic arithmetic on published numbers.
pub fn standard_report(shots: u64, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();
    checks.extend(table1_checks());
    checks.extend(table2_checks());
    checks.extend(table3_checks());
    checks.extend(spam_shape_checks(shots, seed)?);
    checks.extend(throughput_checks()?);
    checks.extend(beat_checks()?);
    Ok(Report { checks })
}
