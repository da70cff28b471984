//! Imaging optics: point-spread function, binning areas, crosstalk.
//!
//! The imaging system maps each ion to a compact spot on the camera. High
//! numerical aperture objectives produce a Gaussian-like core plus faint
//! diffraction spikes: two orthogonal exponential ridges radiating from the
//! center. Light from one ion that lands in a neighbouring ion's binning
//! area is readout crosstalk; the spikes dominate it at trap-scale
//! separations because they decay far more slowly than the core.
//!
//! All coordinates are in camera pixels. Pixel `(i, j)` covers the unit
//! square `[i, i+1) x [j, j+1)`; continuous positions such as ion centers
//! may fall anywhere, including on pixel boundaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{emccd_readout_chain, EmccdModel};
use crate::error::{Error, Result};
use crate::numeric::sample_poisson;

/// Subsamples per pixel edge when integrating the PSF over a pixel.
const PIXEL_SUBSAMPLES: u32 = 4;

/// Point-spread function: Gaussian core plus two orthogonal spike ridges.
///
/// The density at displacement `(dx, dy)` from the ion center is
///
/// ```text
/// (1 - f) * G2(dx, dy; sigma)
///   + f/2 * [ridge(u, v) + ridge(v, u)]
/// ```
///
/// where `G2` is an isotropic 2-d Gaussian, `(u, v)` are the displacement
/// coordinates rotated by `spike_angle_rad`, and a ridge is exponential
/// along its long axis and Gaussian (core width) across it:
/// `ridge(long, trans) = exp(-|long|/L) / (2L) * G1(trans; sigma)`.
/// Each term integrates to one over the plane, so the whole density does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSpreadFunction {
    /// Gaussian core standard deviation, pixels.
    pub core_sigma_px: f64,
    /// Fraction of total light in the spikes, in [0, 1].
    pub spike_fraction: f64,
    /// Exponential decay length of the spikes, pixels.
    pub spike_decay_px: f64,
    /// Orientation of the first spike ridge, radians from the x axis.
    pub spike_angle_rad: f64,
}

impl PointSpreadFunction {
    pub fn validate(&self) -> Result<()> {
        if !(self.core_sigma_px.is_finite() && self.core_sigma_px > 0.0) {
            return Err(Error::invalid("core_sigma_px must be positive"));
        }
        if !(0.0..=1.0).contains(&self.spike_fraction) {
            return Err(Error::invalid(format!(
                "spike_fraction must lie in [0, 1], got {}",
                self.spike_fraction
            )));
        }
        if !(self.spike_decay_px.is_finite() && self.spike_decay_px > 0.0) {
            return Err(Error::invalid("spike_decay_px must be positive"));
        }
        if !self.spike_angle_rad.is_finite() {
            return Err(Error::invalid("spike_angle_rad must be finite"));
        }
        Ok(())
    }

    /// Point density at displacement `(dx, dy)` from the ion center.
    /// Integrates to 1 over the plane.
    pub fn intensity(&self, dx: f64, dy: f64) -> f64 {
        let sigma = self.core_sigma_px;
        let core = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            / (2.0 * std::f64::consts::PI * sigma * sigma);
        if self.spike_fraction == 0.0 {
            return core;
        }
        let (sin, cos) = self.spike_angle_rad.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let ridge = |long: f64, trans: f64| {
            let axial = (-long.abs() / self.spike_decay_px).exp() / (2.0 * self.spike_decay_px);
            let cross = (-(trans * trans) / (2.0 * sigma * sigma)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            axial * cross
        };
        (1.0 - self.spike_fraction) * core
            + self.spike_fraction * 0.5 * (ridge(u, v) + ridge(v, u))
    }

    /// Fraction of the ion's light landing on one pixel, integrated by a
    /// 4x4 midpoint rule over the pixel square.
    pub fn pixel_fraction(&self, px: i64, py: i64, center_x: f64, center_y: f64) -> f64 {
        let n = PIXEL_SUBSAMPLES;
        let step = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = px as f64 + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = py as f64 + (j as f64 + 0.5) * step;
                acc += self.intensity(x - center_x, y - center_y);
            }
        }
        acc / (n * n) as f64
    }
}

/// Axis-aligned rectangular region of whole pixels used for on-camera
/// (hardware) binning. Serializes as `{x0, y0, w, h}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinningArea {
    /// Left pixel column.
    pub x0: i64,
    /// Top pixel row.
    pub y0: i64,
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

impl BinningArea {
    pub fn new(x0: i64, y0: i64, width: u32, height: u32) -> Self {
        BinningArea { x0, y0, width, height }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("binning area must have nonzero size"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Whether a continuous point lies inside the area.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64
            && x < (self.x0 + self.width as i64) as f64
            && y >= self.y0 as f64
            && y < (self.y0 + self.height as i64) as f64
    }

    pub fn overlaps(&self, other: &BinningArea) -> bool {
        let x_sep = self.x0 + self.width as i64 <= other.x0
            || other.x0 + other.width as i64 <= self.x0;
        let y_sep = self.y0 + self.height as i64 <= other.y0
            || other.y0 + other.height as i64 <= self.y0;
        !(x_sep || y_sep)
    }

    /// Iterate over the pixel coordinates inside the area, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let (x0, y0) = (self.x0, self.y0);
        let w = self.width as i64;
        (0..self.height as i64).flat_map(move |j| (0..w).map(move |i| (x0 + i, y0 + j)))
    }
}

/// Fraction of an ion's light collected by a binning area.
pub fn roi_fraction(psf: &PointSpreadFunction, area: &BinningArea, center: (f64, f64)) -> Result<f64> {
    psf.validate()?;
    area.validate()?;
    Ok(area
        .pixels()
        .map(|(px, py)| psf.pixel_fraction(px, py, center.0, center.1))
        .sum())
}

/// Per-pixel expected photoelectron image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    /// Row-major, `height * width` entries; index `y * width + x`.
    pub pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn pixel(&self, x: u32, y: u32) -> f32 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn total(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum()
    }

    /// Sum of pixel values inside a binning area (area must fit the frame).
    pub fn sum_in(&self, area: &BinningArea) -> Result<f64> {
        let x1 = area.x0 + area.width as i64;
        let y1 = area.y0 + area.height as i64;
        if area.x0 < 0 || area.y0 < 0 || x1 > self.width as i64 || y1 > self.height as i64 {
            return Err(Error::OutOfFrame(format!(
                "area {}..{} x {}..{} exceeds {}x{} frame",
                area.x0, x1, area.y0, y1, self.width, self.height
            )));
        }
        Ok(area
            .pixels()
            .map(|(px, py)| self.pixel(px as u32, py as u32) as f64)
            .sum())
    }
}

/// A point emitter in the frame: ion position (pixels) and the mean number
/// of photoelectrons it contributes per detection window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub x_px: f64,
    pub y_px: f64,
    pub brightness_pe: f64,
}

/// Expected photoelectron image of a set of sources: each pixel carries
/// the PSF density at its center (pixel area is one, so density and
/// per-pixel mean coincide at this resolution).
pub fn expected_image(
    width: u32,
    height: u32,
    sources: &[ImageSource],
    psf: &PointSpreadFunction,
) -> Result<ImageBuffer> {
    psf.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::invalid("image must have nonzero size"));
    }
    for s in sources {
        if !(s.x_px.is_finite() && s.y_px.is_finite()) {
            return Err(Error::invalid("source position must be finite"));
        }
        if !(s.brightness_pe.is_finite() && s.brightness_pe >= 0.0) {
            return Err(Error::invalid("source brightness must be >= 0"));
        }
    }
    let mut pixels = vec![0f32; width as usize * height as usize];
    for y in 0..height {
        let cy = y as f64 + 0.5;
        for x in 0..width {
            let cx = x as f64 + 0.5;
            let mut v = 0.0;
            for s in sources {
                v += s.brightness_pe * psf.intensity(cx - s.x_px, cy - s.y_px);
            }
            pixels[(y * width + x) as usize] = v as f32;
        }
    }
    Ok(ImageBuffer { width, height, pixels })
}

/// Signal-routing matrix for a multi-ion scene: entry `[i][j]` is the
/// fraction of ion `i`'s light collected by binning area `j`.
pub fn area_signal_matrix(
    psf: &PointSpreadFunction,
    positions: &[(f64, f64)],
    areas: &[BinningArea],
) -> Result<Vec<Vec<f64>>> {
    for (a, area) in areas.iter().enumerate() {
        for (b, other) in areas.iter().enumerate().skip(a + 1) {
            if area.overlaps(other) {
                return Err(Error::OverlappingAreas(format!("areas {a} and {b} overlap")));
            }
        }
    }
    positions
        .iter()
        .map(|&pos| areas.iter().map(|area| roi_fraction(psf, area, pos)).collect())
        .collect()
}

/// One hardware-binned readout of an area: photoelectrons are summed on
/// chip, then the output chain (gain, read noise, baseline, quantization,
/// clamp) runs once.
pub fn binned_area_sample(model: &EmccdModel, pixel_pe_means: &[f64], rng: &mut impl Rng) -> u64 {
    let pe: u64 = pixel_pe_means.iter().map(|&m| sample_poisson(rng, m)).sum();
    emccd_readout_chain(rng, model, pe)
}

/// Software alternative to hardware binning: read every pixel separately
/// and sum the counts. Every pixel is its own ADC conversion, so each one
/// pays the full read noise and carries the full baseline offset; the
/// firmware clamp only exists in the hardware-binned path, so it does not
/// apply here. The sum therefore sits one baseline per pixel above the
/// binned output and carries the read noise `n_pixels` times over.
pub fn per_pixel_sum_sample(model: &EmccdModel, pixel_pe_means: &[f64], rng: &mut impl Rng) -> u64 {
    let mut per_pixel = *model;
    per_pixel.clamp_enabled = false;
    pixel_pe_means
        .iter()
        .map(|&m| {
            let pe = sample_poisson(rng, m);
            emccd_readout_chain(rng, &per_pixel, pe)
        })
        .sum()
}
