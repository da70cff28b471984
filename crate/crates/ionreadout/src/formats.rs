//! On-disk exchange formats beyond the plain CSV forms.
//!
//! Three things cross tool boundaries often enough to deserve a fixed
//! layout: detector model parameters (JSON with every field named and a
//! `units` block so a document is self-describing), expected images
//! (raw 32-bit float grid with a small fixed header, plus a JSON
//! sidecar carrying the geometry that produced it), and binning-area
//! sets (a JSON array of `{x0, y0, w, h}` rectangles). Count histograms
//! and Rabi series use the CSV helpers on their own types; fit results
//! and timelines serialize directly through serde.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{DepumpingSpec, EmccdModel, PmtModel};
use crate::error::{Error, Result};
use crate::optics::{BinningArea, ImageBuffer, ImageSource, PointSpreadFunction};

/// A self-describing detector setup: one or both backend models, the
/// depumping rates active during detection, and a `units` block naming
/// the unit of every parameter field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub units: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmt: Option<PmtModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emccd: Option<EmccdModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depumping: Option<DepumpingSpec>,
}

/// Unit strings for every model parameter field.
pub fn standard_units() -> BTreeMap<String, String> {
    [
        ("window_s", "seconds"),
        ("lambda_bright", "counts per detection window"),
        ("lambda_dark", "counts per detection window"),
        ("bias", "counts"),
        ("baseline_mean", "counts"),
        ("read_noise_sd", "counts"),
        ("gain", "counts per photoelectron"),
        ("excess_noise_factor", "dimensionless"),
        ("clamp_enabled", "boolean"),
        ("signal_bright_pe", "photoelectrons per detection window"),
        ("signal_dark_pe", "photoelectrons per detection window"),
        ("rate_dark_to_bright_hz", "1/second"),
        ("rate_bright_to_dark_hz", "1/second"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

impl ModelDocument {
    pub fn for_pmt(model: PmtModel, depumping: Option<DepumpingSpec>) -> Self {
        ModelDocument {
            units: standard_units(),
            pmt: Some(model),
            emccd: None,
            depumping,
        }
    }

    pub fn for_emccd(model: EmccdModel, depumping: Option<DepumpingSpec>) -> Self {
        ModelDocument {
            units: standard_units(),
            pmt: None,
            emccd: Some(model),
            depumping,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pmt.is_none() && self.emccd.is_none() {
            return Err(Error::invalid("model document describes no detector"));
        }
        if let Some(m) = &self.pmt {
            m.validate()?;
        }
        if let Some(m) = &self.emccd {
            m.validate()?;
        }
        if let Some(d) = &self.depumping {
            d.validate()?;
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn write_json_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn read_json_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Header size of the raw image format: width, height, and two reserved
/// words, all little-endian u32.
pub const IMAGE_HEADER_BYTES: usize = 16;

/// Refuse to allocate images beyond this many pixels when reading.
const IMAGE_MAX_PIXELS: u64 = 1 << 28;

/// Write an expected image as the raw format: 16-byte header (width,
/// height, two reserved zero words, little-endian u32), then row-major
/// 32-bit little-endian floats.
pub fn write_image<W: Write>(image: &ImageBuffer, mut w: W) -> Result<()> {
    w.write_all(&image.width.to_le_bytes())?;
    w.write_all(&image.height.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for px in &image.pixels {
        w.write_all(&px.to_le_bytes())?;
    }
    Ok(())
}

/// Read the raw image format written by [`write_image`]. Reserved
/// header words are ignored.
pub fn read_image<R: Read>(mut r: R) -> Result<ImageBuffer> {
    let mut header = [0u8; IMAGE_HEADER_BYTES];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("image shorter than its 16-byte header".into()))?;
    let width = u32::from_le_bytes(header[0..4].try_into().unwrap());
    let height = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let pixels = width as u64 * height as u64;
    if pixels == 0 || pixels > IMAGE_MAX_PIXELS {
        return Err(Error::Format(format!(
            "implausible image size {width}x{height}"
        )));
    }
    let mut data = vec![0u8; pixels as usize * 4];
    r.read_exact(&mut data)
        .map_err(|_| Error::Format(format!("image truncated before {pixels} pixels")))?;
    let pixels = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(ImageBuffer {
        width,
        height,
        pixels,
    })
}

pub fn write_image_path<P: AsRef<Path>>(image: &ImageBuffer, path: P) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_image(image, std::io::BufWriter::new(f))
}

pub fn read_image_path<P: AsRef<Path>>(path: P) -> Result<ImageBuffer> {
    let f = std::fs::File::open(path)?;
    read_image(std::io::BufReader::new(f))
}

/// Geometry sidecar accompanying a raw image file: everything needed to
/// regenerate or interpret the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub width: u32,
    pub height: u32,
    /// Physical size of one pixel at the ion plane, micrometers.
    pub pixel_scale_um: f64,
    pub psf: PointSpreadFunction,
    pub sources: Vec<ImageSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub areas: Vec<BinningArea>,
}

impl ImageSidecar {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Serialize a binning-area set as a JSON array of `{x0, y0, w, h}`.
pub fn areas_to_json(areas: &[BinningArea]) -> Result<String> {
    Ok(serde_json::to_string_pretty(areas)?)
}

/// Parse a binning-area set, validating each rectangle.
pub fn areas_from_json(s: &str) -> Result<Vec<BinningArea>> {
    let areas: Vec<BinningArea> = serde_json::from_str(s)?;
    for a in &areas {
        a.validate()?;
    }
    Ok(areas)
}
