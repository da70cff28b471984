//! Count-statistics simulation and real-time state discrimination for
//! trapped-ion fluorescence readout.
//!
//! The crate models the full measurement chain of a qubit readout experiment
//! in which the ion state is inferred from scattered-photon counts:
//!
//! * [`detector`]: photon count statistics for a photomultiplier and an
//!   electron-multiplying CCD, including state-leakage ("depumping") count
//!   mixtures, stochastic EM gain, read noise and the firmware clamp that
//!   pins low camera counts to the bias level.
//! * [`optics`]: point-spread function with diffraction spikes, expected
//!   images, binning areas on the sensor and the light fraction each area
//!   collects (the source of inter-ion crosstalk).
//! * [`discriminator`]: threshold classification, state-preparation-and-
//!   measurement (SPAM) error curves, optimal thresholds, two-ion joint
//!   outcomes and crosstalk estimation from area means.
//! * [`fitters`]: sinusoid and two-tone (beat) least-squares fits for Rabi
//!   scans, Poisson histogram fits with an exclusion floor, and the
//!   background-ratio metric derived from fit extrema.
//! * [`sequencer`]: integer-nanosecond experiment timelines, camera duty
//!   limits, throughput and decision-latency models.
//! * [`pipeline`]: a deterministic bounded single-producer/single-consumer
//!   streaming engine that turns frames into state decisions in real time.
//!
//! Reference measurement values used by the `reproduce` machinery live in
//! [`refdata`]; calibrated default models in [`calibration`]; file formats
//! (CSV histograms, Rabi series, NDJSON frame streams, binary images) in
//! [`formats`].
//!
//! Every stochastic routine takes an explicit seed and draws from a
//! [`rand_chacha::ChaCha8Rng`] stream, so identical inputs produce
//! bit-identical outputs across runs and platforms.

pub mod calibration;
pub mod detector;
pub mod discriminator;
pub mod error;
pub mod fitters;
pub mod formats;
pub mod hist;
pub mod numeric;
pub mod optics;
pub mod pipeline;
pub mod refdata;
pub mod reproduce;
pub mod sequencer;

pub use detector::QubitState;
pub use error::{Error, Result};
pub use hist::CountHistogram;

/// Environment variable that, when set, overrides any configured RNG seed.
pub const SEED_ENV_VAR: &str = "IONREADOUT_SEED";

/// Resolve the effective seed: the `IONREADOUT_SEED` environment variable
/// wins over the configured value.
pub fn effective_seed(configured: u64) -> u64 {
    match std::env::var(SEED_ENV_VAR) {
        Ok(s) => s.trim().parse().unwrap_or(configured),
        Err(_) => configured,
    }
}
