//! Least-squares fits for Rabi-type count series and Poisson histograms.
//!
//! A Rabi scan records mean fluorescence against microwave pulse
//! duration; a single ion traces `A sin(pi t / t_pi + phi) + B`, and two
//! ions with slightly different Rabi frequencies sum to a two-tone beat.
//! Fits run damped iterative linearization (Levenberg-Marquardt style)
//! seeded from a discrete spectrum of the mean-subtracted data, weighted
//! by the reported per-point standard deviations. The module also fits a
//! Poisson rate to a count histogram by maximum likelihood, optionally
//! excluding everything at or below a floor (camera data keeps a clamp
//! pile-up at the bias count that must not enter the fit), and derives
//! two scalar diagnostics: the background ratio beta and the duration at
//! which a two-tone beat envelope first collapses.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hist::CountHistogram;
use crate::numeric::{invert_dense, poisson_pmf_vec, solve_dense};

/// Hard iteration cap for the damped linearization loop.
pub const MAX_FIT_ITERATIONS: u64 = 500;

/// Convergence criterion: largest relative parameter step of an accepted
/// iteration.
pub const FIT_RELATIVE_TOLERANCE: f64 = 1e-10;

/// One point of a Rabi scan: mean counts over the shots taken at one
/// pulse duration, with the standard deviation of that mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiSample {
    pub duration_s: f64,
    pub mean_counts: f64,
    pub sd: f64,
}

/// A Rabi scan: samples ordered by strictly increasing pulse duration.
///
/// `shots_per_point` is bookkeeping (zero when unknown, for example
/// after reading a CSV, which does not carry it); the fit weights come
/// from the per-point standard deviations instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiSeries {
    pub samples: Vec<RabiSample>,
    pub shots_per_point: u64,
}

impl RabiSeries {
    pub fn new(samples: Vec<RabiSample>, shots_per_point: u64) -> Result<Self> {
        let series = RabiSeries {
            samples,
            shots_per_point,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InsufficientData(
                "a series needs at least two samples".into(),
            ));
        }
        for pair in self.samples.windows(2) {
            if !(pair[1].duration_s > pair[0].duration_s) {
                return Err(Error::invalid(format!(
                    "durations must strictly increase, got {} then {}",
                    pair[0].duration_s, pair[1].duration_s
                )));
            }
        }
        for s in &self.samples {
            if !(s.duration_s.is_finite() && s.duration_s >= 0.0) {
                return Err(Error::invalid("durations must be finite and nonnegative"));
            }
            if !s.mean_counts.is_finite() {
                return Err(Error::invalid("mean counts must be finite"));
            }
            if !(s.sd.is_finite() && s.sd >= 0.0) {
                return Err(Error::invalid("sd must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Duration span from first to last sample.
    pub fn span(&self) -> f64 {
        self.samples.last().unwrap().duration_s - self.samples[0].duration_s
    }

    /// A copy with every mean shifted by `delta` counts. Camera series
    /// subtract the measured baseline this way before a background-ratio
    /// reading.
    pub fn offset_means(&self, delta: f64) -> RabiSeries {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.mean_counts += delta;
        }
        out
    }

    /// Fit weights: inverse variances when every point reports a positive
    /// sd, otherwise uniform unit weights (noiseless synthetic data).
    fn weights(&self) -> Vec<f64> {
        if self.samples.iter().all(|s| s.sd > 0.0) {
            self.samples.iter().map(|s| 1.0 / (s.sd * s.sd)).collect()
        } else {
            vec![1.0; self.samples.len()]
        }
    }

    fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.duration_s).collect()
    }

    fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mean_counts).collect()
    }

    /// Write the `duration_us,mean_counts,sd` CSV form. Durations are
    /// stored in microseconds on disk.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "duration_us,mean_counts,sd")?;
        for s in &self.samples {
            writeln!(w, "{},{},{}", s.duration_s * 1e6, s.mean_counts, s.sd)?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse the `duration_us,mean_counts,sd` CSV form.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty series CSV".into()))??;
        if header.trim() != "duration_us,mean_counts,sd" {
            return Err(Error::Format(format!(
                "expected header 'duration_us,mean_counts,sd', got '{header}'"
            )));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut fields = t.split(',');
            let mut field = |name: &str| -> Result<f64> {
                fields
                    .next()
                    .ok_or_else(|| {
                        Error::Format(format!("line {}: missing {name}", lineno + 2))
                    })?
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad {name}", lineno + 2)))
            };
            samples.push(RabiSample {
                duration_s: field("duration_us")? * 1e-6,
                mean_counts: field("mean_counts")?,
                sd: field("sd")?,
            });
        }
        RabiSeries::new(samples, 0)
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Single-tone Rabi fit: `C(t) = A sin(pi t / t_pi + phi) + B`.
///
/// Canonical form has `a >= 0` and `phi` in `[0, 2 pi)`. The covariance
/// is ordered (A, t_pi, phi, B); when the weights came from reported
/// standard deviations it is the plain inverse normal matrix, with unit
/// weights it is scaled by the reduced sum of squares. `residual` fields
/// hold the weighted sum of squared residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    pub a: f64,
    pub t_pi: f64,
    pub phi: f64,
    pub b: f64,
    pub covariance: [[f64; 4]; 4],
    pub iterations: u64,
    pub initial_residual: f64,
    pub residual: f64,
}

impl RabiFit {
    /// A bare parameter guess, usable as the optional start of
    /// [`fit_rabi`].
    pub fn guess(a: f64, t_pi: f64, phi: f64, b: f64) -> Self {
        RabiFit {
            a,
            t_pi,
            phi,
            b,
            covariance: [[0.0; 4]; 4],
            iterations: 0,
            initial_residual: 0.0,
            residual: 0.0,
        }
    }

    /// Model value at a pulse duration.
    pub fn value(&self, t: f64) -> f64 {
        self.a * (PI * t / self.t_pi + self.phi).sin() + self.b
    }
}

/// Two-tone beat fit: the sum of two Rabi tones over a common offset.
///
/// Canonical ordering puts the shorter pi-time first; a tone whose
/// amplitude is negligible next to the other carries no frequency
/// information and sorts last instead. Covariance order is
/// (A1, t_pi1, phi1, A2, t_pi2, phi2, B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatFit {
    pub a1: f64,
    pub t_pi1: f64,
    pub phi1: f64,
    pub a2: f64,
    pub t_pi2: f64,
    pub phi2: f64,
    pub b: f64,
    pub covariance: [[f64; 7]; 7],
    pub iterations: u64,
    pub initial_residual: f64,
    pub residual: f64,
}

impl BeatFit {
    pub fn value(&self, t: f64) -> f64 {
        self.a1 * (PI * t / self.t_pi1 + self.phi1).sin()
            + self.a2 * (PI * t / self.t_pi2 + self.phi2).sin()
            + self.b
    }

    /// First envelope null of the beat, see [`beat_envelope_minimum`].
    pub fn envelope_minimum(&self) -> Result<f64> {
        envelope_minimum_from_pi_times(self.t_pi1, self.t_pi2)
    }
}

/// Maximum-likelihood Poisson fit to a count histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    /// Rate in rescaled units (counts divided by `scale`).
    pub lambda: f64,
    /// Occurrences that entered the fit.
    pub amplitude: u64,
    /// Counts at or below this value were excluded.
    pub exclusion_floor: Option<u64>,
    /// Counts per unit of the fitted Poisson variable.
    pub scale: f64,
}

impl PoissonFit {
    /// Fitted mean in raw count units.
    pub fn mean_counts(&self) -> f64 {
        self.lambda * self.scale
    }
}

// Model functions and their parameter gradients. Parameter layout:
// single tone (a, t_pi, phi, b), beat (a1, t_pi1, phi1, a2, t_pi2,
// phi2, b).

fn rabi_value(t: f64, p: &[f64]) -> f64 {
    p[0] * (PI * t / p[1] + p[2]).sin() + p[3]
}

fn rabi_gradient(t: f64, p: &[f64], out: &mut [f64]) {
    let arg = PI * t / p[1] + p[2];
    let (sin, cos) = arg.sin_cos();
    out[0] = sin;
    out[1] = -p[0] * cos * PI * t / (p[1] * p[1]);
    out[2] = p[0] * cos;
    out[3] = 1.0;
}

fn beat_value(t: f64, p: &[f64]) -> f64 {
    p[0] * (PI * t / p[1] + p[2]).sin() + p[3] * (PI * t / p[4] + p[5]).sin() + p[6]
}

fn beat_gradient(t: f64, p: &[f64], out: &mut [f64]) {
    for tone in 0..2 {
        let base = 3 * tone;
        let arg = PI * t / p[base + 1] + p[base + 2];
        let (sin, cos) = arg.sin_cos();
        out[base] = sin;
        out[base + 1] = -p[base] * cos * PI * t / (p[base + 1] * p[base + 1]);
        out[base + 2] = p[base] * cos;
    }
    out[6] = 1.0;
}

/// One weighted least-squares problem over a series.
struct Objective<'a> {
    times: &'a [f64],
    values: &'a [f64],
    weights: &'a [f64],
    dim: usize,
    model: fn(f64, &[f64]) -> f64,
    gradient: fn(f64, &[f64], &mut [f64]),
}

impl Objective<'_> {
    fn cost(&self, p: &[f64]) -> f64 {
        let mut c = 0.0;
        for i in 0..self.times.len() {
            let r = (self.model)(self.times[i], p) - self.values[i];
            c += self.weights[i] * r * r;
        }
        c
    }

    /// Weighted sum of squares and its analytic gradient.
    fn cost_and_gradient(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut cost = 0.0;
        let mut grad = vec![0.0; self.dim];
        let mut row = vec![0.0; self.dim];
        for i in 0..self.times.len() {
            let r = (self.model)(self.times[i], p) - self.values[i];
            let w = self.weights[i];
            cost += w * r * r;
            (self.gradient)(self.times[i], p, &mut row);
            for j in 0..self.dim {
                grad[j] += 2.0 * w * r * row[j];
            }
        }
        (cost, grad)
    }

    /// Normal-equation pieces at `p`: the weighted J^T J (row-major) and
    /// J^T r.
    fn normal_system(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut jtj = vec![0.0; d * d];
        let mut jtr = vec![0.0; d];
        let mut row = vec![0.0; d];
        for i in 0..self.times.len() {
            let r = (self.model)(self.times[i], p) - self.values[i];
            let w = self.weights[i];
            (self.gradient)(self.times[i], p, &mut row);
            for j in 0..d {
                jtr[j] += w * r * row[j];
                for k in j..d {
                    jtj[j * d + k] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                jtj[j * d + k] = jtj[k * d + j];
            }
        }
        (jtj, jtr)
    }
}

struct FitOutcome {
    params: Vec<f64>,
    covariance: Vec<f64>,
    iterations: u64,
    initial_cost: f64,
    cost: f64,
}

/// Damped iterative linearization: solve the damped normal equations,
/// grow the damping tenfold on a rejected step and shrink it threefold
/// on an accepted one, and stop when an accepted step moves every
/// parameter by less than [`FIT_RELATIVE_TOLERANCE`] relative.
///
/// `scales` gives a characteristic magnitude per parameter so the
/// relative criterion stays meaningful for parameters passing through
/// zero. `calibrated_weights` says whether the weights are true inverse
/// variances (covariance is then the inverse normal matrix) or unit
/// placeholders (covariance gets scaled by the reduced sum of squares).
fn damped_least_squares(
    obj: &Objective,
    start: &[f64],
    scales: &[f64],
    calibrated_weights: bool,
) -> Result<FitOutcome> {
    let d = obj.dim;
    let mut p = start.to_vec();
    let mut cost = obj.cost(&p);
    let initial_cost = cost;
    if !cost.is_finite() {
        return Err(Error::invalid("non-finite residual at the start point"));
    }
    let mut damping = 1e-3;
    let mut flat_steps = 0u32;
    for iteration in 1..=MAX_FIT_ITERATIONS {
        let (jtj, jtr) = obj.normal_system(&p);
        let max_diag = (0..d)
            .map(|j| jtj[j * d + j])
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut damped = jtj.clone();
        for j in 0..d {
            // Dead directions (zero curvature) still need a positive
            // damped diagonal or the solve goes singular.
            let floor = jtj[j * d + j].max(1e-12 * max_diag);
            damped[j * d + j] += damping * floor;
        }
        let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
        let step = solve_dense(damped, rhs);
        let accepted = step.and_then(|delta| {
            let candidate: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let new_cost = obj.cost(&candidate);
            (new_cost.is_finite() && new_cost <= cost).then_some((delta, candidate, new_cost))
        });
        match accepted {
            Some((delta, candidate, new_cost)) => {
                let rel = delta
                    .iter()
                    .enumerate()
                    .map(|(j, dj)| dj.abs() / (p[j].abs() + 1e-6 * scales[j]))
                    .fold(0.0_f64, f64::max);
                let improvement = cost - new_cost;
                p = candidate;
                cost = new_cost;
                damping = (damping / 3.0).max(1e-14);
                if improvement <= 1e-11 * cost.max(f64::MIN_POSITIVE) && rel < 1e-7 {
                    flat_steps += 1;
                } else {
                    flat_steps = 0;
                }
                // Converged when a step moves every parameter below
                // tolerance, or after three consecutive steps that moved
                // neither parameters nor cost meaningfully (a flat basin
                // direction with no cost signal, such as the phase of a
                // zero-amplitude tone).
                if rel < FIT_RELATIVE_TOLERANCE || flat_steps >= 3 {
                    let covariance = fit_covariance(obj, &p, cost, calibrated_weights);
                    return Ok(FitOutcome {
                        params: p,
                        covariance,
                        iterations: iteration,
                        initial_cost,
                        cost,
                    });
                }
            }
            None => {
                damping *= 10.0;
                if damping > 1e30 {
                    break;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_FIT_ITERATIONS as usize,
    })
}

fn fit_covariance(obj: &Objective, p: &[f64], cost: f64, calibrated_weights: bool) -> Vec<f64> {
    let d = obj.dim;
    let (jtj, _) = obj.normal_system(p);
    match invert_dense(&jtj, d) {
        Some(mut inv) => {
            if !calibrated_weights {
                let dof = obj.times.len().saturating_sub(d).max(1) as f64;
                let s2 = cost / dof;
                for v in &mut inv {
                    *v *= s2;
                }
            }
            inv
        }
        // Unidentifiable directions (for example a tone fitted with zero
        // amplitude) leave the normal matrix singular.
        None => vec![f64::NAN; d * d],
    }
}

/// Discrete spectrum power of mean-subtracted data at each frequency.
///
/// Uses a complex-rotation recurrence per frequency when the grid is
/// uniform, which the long scans always are, and direct evaluation
/// otherwise.
fn spectrum_power(times: &[f64], data: &[f64], freqs: &[f64]) -> Vec<f64> {
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let (mut c, mut s) = (0.0, 0.0);
            if uniform {
                let (step_sin, step_cos) = (w * dt).sin_cos();
                let (mut sin_p, mut cos_p) = (w * times[0]).sin_cos();
                for &d in data {
                    c += d * cos_p;
                    s += d * sin_p;
                    let next_cos = cos_p * step_cos - sin_p * step_sin;
                    sin_p = sin_p * step_cos + cos_p * step_sin;
                    cos_p = next_cos;
                }
            } else {
                for (&t, &d) in times.iter().zip(data) {
                    let (sin_p, cos_p) = (w * t).sin_cos();
                    c += d * cos_p;
                    s += d * sin_p;
                }
            }
            c * c + s * s
        })
        .collect()
}

fn spectrum_power_at(times: &[f64], data: &[f64], f: f64) -> f64 {
    spectrum_power(times, data, &[f])[0]
}

/// Refine a spectrum peak by ternary search within one grid step.
fn refine_peak(times: &[f64], data: &[f64], f: f64, half_width: f64) -> f64 {
    let mut lo = (f - half_width).max(f64::MIN_POSITIVE);
    let mut hi = f + half_width;
    for _ in 0..60 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if spectrum_power_at(times, data, a) < spectrum_power_at(times, data, b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Amplitude and phase of a single tone at a known frequency, from the
/// quadrature sums of mean-subtracted data.
fn tone_at(times: &[f64], data: &[f64], f: f64) -> (f64, f64) {
    let w = 2.0 * PI * f;
    let (mut c, mut s) = (0.0, 0.0);
    for (&t, &d) in times.iter().zip(data) {
        let (sin_p, cos_p) = (w * t).sin_cos();
        c += d * cos_p;
        s += d * sin_p;
    }
    let n = times.len() as f64;
    let amplitude = 2.0 * (c * c + s * s).sqrt() / n;
    let phase = c.atan2(s);
    (amplitude, phase)
}

/// Exact weighted least-squares score of a two-tone model at fixed
/// frequencies.
///
/// With the frequencies pinned the model is linear in the quadrature
/// amplitudes and the offset, so one 5x5 normal solve yields the optimal
/// remaining parameters. Returns the cost and the full seven-parameter
/// start vector it implies.
fn score_tone_pair(
    times: &[f64],
    values: &[f64],
    weights: &[f64],
    freqs: [f64; 2],
) -> Option<(f64, [f64; 7])> {
    let mut normal = vec![0.0_f64; 25];
    let mut rhs = vec![0.0_f64; 5];
    for ((&t, &v), &w) in times.iter().zip(values).zip(weights) {
        let (s1, c1) = (2.0 * PI * freqs[0] * t).sin_cos();
        let (s2, c2) = (2.0 * PI * freqs[1] * t).sin_cos();
        let basis = [s1, c1, s2, c2, 1.0];
        for r in 0..5 {
            for c in r..5 {
                normal[r * 5 + c] += w * basis[r] * basis[c];
            }
            rhs[r] += w * basis[r] * v;
        }
    }
    for r in 1..5 {
        for c in 0..r {
            normal[r * 5 + c] = normal[c * 5 + r];
        }
    }
    let beta = solve_dense(normal, rhs)?;
    let mut cost = 0.0;
    for ((&t, &v), &w) in times.iter().zip(values).zip(weights) {
        let (s1, c1) = (2.0 * PI * freqs[0] * t).sin_cos();
        let (s2, c2) = (2.0 * PI * freqs[1] * t).sin_cos();
        let model = beta[0] * s1 + beta[1] * c1 + beta[2] * s2 + beta[3] * c2 + beta[4];
        cost += w * (v - model) * (v - model);
    }
    // a sin(wt + phi) = a cos(phi) sin(wt) + a sin(phi) cos(wt)
    let start = [
        beta[0].hypot(beta[1]),
        1.0 / (2.0 * freqs[0]),
        beta[1].atan2(beta[0]),
        beta[2].hypot(beta[3]),
        1.0 / (2.0 * freqs[1]),
        beta[3].atan2(beta[2]),
        beta[4],
    ];
    Some((cost, start))
}

/// A frequency grid from one cycle per span up to the sampling limit,
/// oversampled fourfold against the natural resolution.
fn spectrum_grid(span: f64, n: usize) -> Vec<f64> {
    let step = 1.0 / (4.0 * span);
    let max_k = 2 * n;
    (4..=max_k).map(|k| k as f64 * step).collect()
}

/// Locate the strongest spectral peaks of the mean-subtracted series,
/// strongest first.
fn spectrum_peaks(times: &[f64], values: &[f64], max_peaks: usize) -> Result<Vec<f64>> {
    let n = times.len();
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::InsufficientData("zero duration span".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let data: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let freqs = spectrum_grid(span, n);
    let power = spectrum_power(times, &data, &freqs);

    // Local maxima on the oversampled grid, strongest first.
    let mut maxima: Vec<(f64, f64)> = (0..freqs.len())
        .filter(|&i| {
            (i == 0 || power[i] >= power[i - 1])
                && (i + 1 == freqs.len() || power[i] > power[i + 1])
        })
        .map(|i| (power[i], freqs[i]))
        .collect();
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    if maxima.is_empty() || maxima[0].0 <= 0.0 {
        return Err(Error::InsufficientData(
            "no oscillation found in the spectrum".into(),
        ));
    }

    let mut peaks: Vec<f64> = Vec::new();
    let top_power = maxima[0].0;
    for &(p, f) in &maxima {
        if peaks.len() >= max_peaks {
            break;
        }
        // A second tone must stand clear of the first by the natural
        // resolution and carry comparable power; weaker nearby maxima
        // are window sidelobes of the first peak.
        if !peaks.is_empty() && (p < 0.2 * top_power || (f - peaks[0]).abs() < 1.0 / span) {
            continue;
        }
        peaks.push(refine_peak(times, &data, f, 1.0 / (4.0 * span)));
    }
    Ok(peaks)
}

fn canonicalize_tone(a: &mut f64, phi: &mut f64) {
    if *a < 0.0 {
        *a = -*a;
        *phi += PI;
    }
    *phi = phi.rem_euclid(2.0 * PI);
}

/// Fit a single Rabi tone to a series.
///
/// Needs at least eight samples spanning one oscillation period. Without
/// a guess, the frequency seeds from the dominant spectrum peak, which
/// the span precondition makes well defined; a guess whose period
/// exceeds the span is rejected. Convergence means an accepted step
/// moved every parameter by less than 1e-10 relative; the optimum never
/// has a larger weighted residual than the start.
pub fn fit_rabi(series: &RabiSeries, seed_guess: Option<&RabiFit>) -> Result<RabiFit> {
    series.validate()?;
    if series.samples.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "a Rabi fit needs at least 8 samples, got {}",
            series.samples.len()
        )));
    }
    let times = series.times();
    let values = series.values();
    let weights = series.weights();
    let calibrated = series.samples.iter().all(|s| s.sd > 0.0);

    let start = match seed_guess {
        Some(g) => {
            if !(g.t_pi > 0.0) {
                return Err(Error::invalid("guess t_pi must be positive"));
            }
            if series.span() < 2.0 * g.t_pi {
                return Err(Error::InsufficientData(
                    "span is shorter than one period of the guess".into(),
                ));
            }
            vec![g.a, g.t_pi, g.phi, g.b]
        }
        None => {
            let peaks = spectrum_peaks(&times, &values, 1)?;
            let f = peaks[0];
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let data: Vec<f64> = values.iter().map(|v| v - mean).collect();
            let (a0, phi0) = tone_at(&times, &data, f);
            vec![a0, 1.0 / (2.0 * f), phi0, mean]
        }
    };

    let objective = Objective {
        times: &times,
        values: &values,
        weights: &weights,
        dim: 4,
        model: rabi_value,
        gradient: rabi_gradient,
    };
    let value_scale = values.iter().fold(1e-30_f64, |m, v| m.max(v.abs())).max(1.0);
    let scales = [value_scale, series.span(), 2.0 * PI, value_scale];
    let outcome = damped_least_squares(&objective, &start, &scales, calibrated)?;

    let mut a = outcome.params[0];
    let t_pi = outcome.params[1];
    let mut phi = outcome.params[2];
    let b = outcome.params[3];
    canonicalize_tone(&mut a, &mut phi);
    if !(t_pi > 0.0) {
        return Err(Error::NonConvergence {
            iterations: outcome.iterations as usize,
        });
    }
    let mut covariance = [[0.0; 4]; 4];
    for (j, row) in covariance.iter_mut().enumerate() {
        row.copy_from_slice(&outcome.covariance[4 * j..4 * j + 4]);
    }
    Ok(RabiFit {
        a,
        t_pi,
        phi,
        b,
        covariance,
        iterations: outcome.iterations,
        initial_residual: outcome.initial_cost,
        residual: outcome.cost,
    })
}

/// Weighted sum of squares of a single-tone parameter set against a
/// series, with its analytic gradient ordered (A, t_pi, phi, B).
pub fn rabi_objective(series: &RabiSeries, fit: &RabiFit) -> Result<(f64, [f64; 4])> {
    series.validate()?;
    let times = series.times();
    let values = series.values();
    let weights = series.weights();
    let objective = Objective {
        times: &times,
        values: &values,
        weights: &weights,
        dim: 4,
        model: rabi_value,
        gradient: rabi_gradient,
    };
    let (cost, grad) = objective.cost_and_gradient(&[fit.a, fit.t_pi, fit.phi, fit.b]);
    Ok((cost, [grad[0], grad[1], grad[2], grad[3]]))
}

/// Like [`rabi_objective`] for the two-tone model, gradient ordered
/// (A1, t_pi1, phi1, A2, t_pi2, phi2, B).
pub fn beat_objective(series: &RabiSeries, fit: &BeatFit) -> Result<(f64, [f64; 7])> {
    series.validate()?;
    let times = series.times();
    let values = series.values();
    let weights = series.weights();
    let objective = Objective {
        times: &times,
        values: &values,
        weights: &weights,
        dim: 7,
        model: beat_value,
        gradient: beat_gradient,
    };
    let p = [
        fit.a1, fit.t_pi1, fit.phi1, fit.a2, fit.t_pi2, fit.phi2, fit.b,
    ];
    let (cost, grad) = objective.cost_and_gradient(&p);
    let mut out = [0.0; 7];
    out.copy_from_slice(&grad);
    Ok((cost, out))
}

/// Relative amplitude below which a tone counts as empty for ordering
/// and collapse checks.
const NEGLIGIBLE_TONE: f64 = 1e-6;

/// Symmetric tone splits scored by the linear pre-fit of [`fit_beat`].
const BEAT_SPLIT_GRID: usize = 50;

/// Widest scored split, in cycles over the scan span.
const BEAT_SPLIT_MAX_CYCLES: f64 = 2.5;

/// Linear pre-fit candidates handed to the nonlinear polish.
const BEAT_POLISH_STARTS: usize = 3;

fn beat_fit_from(params: &[f64], covariance: &[f64], iterations: u64, c0: f64, c: f64) -> BeatFit {
    let mut p = params.to_vec();
    let mut cov = covariance.to_vec();
    // Canonical order: shorter pi-time first, except that a tone with
    // negligible amplitude carries no pi-time information and goes last.
    let (a1, a2) = (p[0].abs(), p[3].abs());
    let negligible = a1.min(a2) < NEGLIGIBLE_TONE * a1.max(a2);
    let swap = if negligible { a1 < a2 } else { p[4] < p[1] };
    if swap {
        p.swap(0, 3);
        p.swap(1, 4);
        p.swap(2, 5);
        let perm = [3usize, 4, 5, 0, 1, 2, 6];
        let mut swapped = vec![0.0; 49];
        for r in 0..7 {
            for c in 0..7 {
                swapped[r * 7 + c] = cov[perm[r] * 7 + perm[c]];
            }
        }
        cov = swapped;
    }
    let (mut a1, mut phi1) = (p[0], p[2]);
    canonicalize_tone(&mut a1, &mut phi1);
    let (mut a2, mut phi2) = (p[3], p[5]);
    canonicalize_tone(&mut a2, &mut phi2);
    let mut covariance = [[0.0; 7]; 7];
    for (j, row) in covariance.iter_mut().enumerate() {
        row.copy_from_slice(&cov[7 * j..7 * j + 7]);
    }
    BeatFit {
        a1,
        t_pi1: p[1],
        phi1,
        a2,
        t_pi2: p[4],
        phi2,
        b: p[6],
        covariance,
        iterations,
        initial_residual: c0,
        residual: c,
    }
}

/// Fit a two-tone beat to a series.
///
/// The span must cover a full beat envelope period and the step must
/// resolve the carrier with at least five samples per period; both are
/// checked against the seeded frequencies. Seeding takes the two
/// strongest distinct spectrum peaks or, when the tones are unresolved,
/// splits the single peak symmetrically so the seeds sit one natural
/// resolution element apart. The result orders the shorter pi-time
/// first and never fits worse than the best single-tone model; two
/// significant tones collapsing onto one frequency report as unresolved.
pub fn fit_beat(series: &RabiSeries) -> Result<BeatFit> {
    series.validate()?;
    if series.samples.len() < 16 {
        return Err(Error::InsufficientData(format!(
            "a beat fit needs at least 16 samples, got {}",
            series.samples.len()
        )));
    }
    let times = series.times();
    let values = series.values();
    let weights = series.weights();
    let calibrated = series.samples.iter().all(|s| s.sd > 0.0);
    let span = series.span();
    let mean_dt = span / (times.len() - 1) as f64;

    let peaks = spectrum_peaks(&times, &values, 2)?;
    let carrier = peaks[0];
    if mean_dt > 1.0 / (5.0 * carrier) {
        return Err(Error::InsufficientData(format!(
            "step {mean_dt:.3e} s does not resolve the carrier at {carrier:.3e} Hz",
        )));
    }
    // Candidate frequency pairs: resolved peaks if present, plus
    // symmetric splits of the dominant peak from well inside one
    // resolution element out to separations the spectrum would have
    // resolved into two peaks. The exact linear solve at each pair puts
    // the best start within a grid step of the optimum; on
    // near-degenerate tones that is the difference between a handful of
    // polish iterations and a stalled walk along the degenerate valley.
    let mut pairs: Vec<[f64; 2]> = Vec::new();
    if peaks.len() == 2 {
        pairs.push([peaks[0], peaks[1]]);
    }
    for k in 1..=BEAT_SPLIT_GRID {
        let separation = k as f64 * BEAT_SPLIT_MAX_CYCLES / (BEAT_SPLIT_GRID as f64 * span);
        if carrier > separation {
            pairs.push([carrier - separation / 2.0, carrier + separation / 2.0]);
        }
    }
    let mut scored: Vec<(f64, [f64; 7])> = pairs
        .iter()
        .filter_map(|&pair| score_tone_pair(&times, &values, &weights, pair))
        .collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    scored.truncate(BEAT_POLISH_STARTS);

    let objective = Objective {
        times: &times,
        values: &values,
        weights: &weights,
        dim: 7,
        model: beat_value,
        gradient: beat_gradient,
    };
    let value_scale = values.iter().fold(1e-30_f64, |m, v| m.max(v.abs())).max(1.0);
    let scales = [
        value_scale,
        span,
        2.0 * PI,
        value_scale,
        span,
        2.0 * PI,
        value_scale,
    ];

    let mut best: Option<FitOutcome> = None;
    for (_, start) in &scored {
        if let Ok(outcome) = damped_least_squares(&objective, start, &scales, calibrated) {
            if best.as_ref().is_none_or(|b| outcome.cost < b.cost) {
                best = Some(outcome);
            }
        }
    }

    // A two-tone model nests every single-tone model; hold it to that.
    // On single-tone data the split seeds sit in a flat valley and can
    // stall outright, so the embedded start also serves as a fallback.
    if let Ok(single) = fit_rabi(series, None) {
        if best.as_ref().is_none_or(|b| b.cost > single.residual) {
            let embedded = [
                single.a,
                single.t_pi,
                single.phi,
                0.0,
                single.t_pi * 1.001,
                0.0,
                single.b,
            ];
            let outcome = damped_least_squares(&objective, &embedded, &scales, calibrated)
                .unwrap_or(FitOutcome {
                    params: embedded.to_vec(),
                    covariance: vec![f64::NAN; 49],
                    iterations: single.iterations,
                    initial_cost: single.initial_residual,
                    cost: single.residual,
                });
            if best.as_ref().is_none_or(|b| outcome.cost < b.cost) {
                best = Some(outcome);
            }
        }
    }
    let best = best.ok_or(Error::NonConvergence {
        iterations: MAX_FIT_ITERATIONS as usize,
    })?;

    let fit = beat_fit_from(
        &best.params,
        &best.covariance,
        best.iterations,
        best.initial_cost,
        best.cost,
    );
    if !(fit.t_pi1 > 0.0 && fit.t_pi2 > 0.0) {
        return Err(Error::NonConvergence {
            iterations: fit.iterations as usize,
        });
    }
    let significant = fit.a1.min(fit.a2) >= NEGLIGIBLE_TONE * fit.a1.max(fit.a2);
    if significant && (fit.t_pi1 - fit.t_pi2).abs() <= 1e-9 * fit.t_pi2 {
        return Err(Error::UnresolvedTones);
    }
    Ok(fit)
}

/// Duration of the first beat-envelope null for two tones of equal
/// weight: `1 / (2 |f1 - f2|)` with `f = 1 / (2 t_pi)`.
pub fn beat_envelope_minimum(fit: &BeatFit) -> Result<f64> {
    fit.envelope_minimum()
}

/// [`beat_envelope_minimum`] from bare pi-times.
pub fn envelope_minimum_from_pi_times(t_pi1: f64, t_pi2: f64) -> Result<f64> {
    if !(t_pi1 > 0.0 && t_pi2 > 0.0 && t_pi1.is_finite() && t_pi2.is_finite()) {
        return Err(Error::invalid("pi-times must be positive and finite"));
    }
    if t_pi1 == t_pi2 {
        return Err(Error::invalid(
            "equal pi-times produce no beat and no envelope minimum",
        ));
    }
    // 1 / (2 |f1 - f2|) rearranged to avoid cancellation in the
    // reciprocals.
    Ok(t_pi1 * t_pi2 / (t_pi1 - t_pi2).abs())
}

/// Maximum-likelihood Poisson rate for a count histogram.
///
/// Counts rescale by `scale` before fitting (camera counts are
/// gain-amplified, so `scale` maps them back to an effective photon
/// number; use 1.0 for direct counters). With an exclusion floor the
/// likelihood is the truncated Poisson over values above the floor,
/// which corrects the mean for the missing low tail.
pub fn fit_poisson_hist(
    hist: &CountHistogram,
    exclusion_floor: Option<u64>,
    scale: f64,
) -> Result<PoissonFit> {
    if hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid("scale must be positive"));
    }
    let included: Vec<(u64, u64)> = hist
        .iter()
        .filter(|&(c, _)| exclusion_floor.is_none_or(|floor| c > floor))
        .collect();
    if included.is_empty() {
        return Err(Error::AllMassExcluded);
    }
    let amplitude: u64 = included.iter().map(|&(_, n)| n).sum();
    let mean_obs = included
        .iter()
        .map(|&(c, n)| (c as f64 / scale) * n as f64)
        .sum::<f64>()
        / amplitude as f64;

    let lambda = match exclusion_floor {
        None => mean_obs,
        Some(floor) => {
            // Smallest integer of the rescaled variable above the floor.
            let m = (floor as f64 / scale).floor() as usize + 1;
            truncated_poisson_rate(mean_obs, m)
        }
    };
    Ok(PoissonFit {
        lambda,
        amplitude,
        exclusion_floor,
        scale,
    })
}

/// Solve `E[X | X >= m] = mean_obs` for the Poisson rate by bisection.
/// The conditional mean is `lambda P(X >= m - 1) / P(X >= m)`, strictly
/// increasing in lambda with limits m (lambda to 0) and infinity.
fn truncated_poisson_rate(mean_obs: f64, m: usize) -> f64 {
    if mean_obs <= m as f64 {
        // All included mass sits at the truncation edge; the rate is not
        // meaningfully identified below it.
        return mean_obs;
    }
    let conditional_mean = |lambda: f64| -> f64 {
        // Survivals from the cumulative mass below m - 1 and m.
        let pmf = poisson_pmf_vec(lambda, m + 1);
        let below_m1: f64 = pmf[..m - 1].iter().sum();
        let below_m: f64 = pmf[..m].iter().sum();
        let s_m1 = (1.0 - below_m1).max(f64::MIN_POSITIVE);
        let s_m = (1.0 - below_m).max(f64::MIN_POSITIVE);
        lambda * s_m1 / s_m
    };
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, mean_obs);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if conditional_mean(mid) < mean_obs {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Background ratio of a fitted Rabi curve: with Max = B + |A| and
/// Min = B - |A|, beta = Min / (Max - Min). Camera fits subtract the
/// measured baseline from the series first; a negative Min means the
/// baseline was over-subtracted and is reported as an error.
pub fn background_ratio(fit: &RabiFit) -> Result<f64> {
    let amplitude = fit.a.abs();
    if !(amplitude > 0.0) {
        return Err(Error::invalid("zero-amplitude fit has no contrast"));
    }
    let min = fit.b - amplitude;
    if min < 0.0 {
        return Err(Error::NegativeMinimum { minimum: min });
    }
    Ok(min / (2.0 * amplitude))
}
