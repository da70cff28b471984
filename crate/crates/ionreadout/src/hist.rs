//! Photon-count histograms and their CSV form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Histogram of integer photon/ADU counts.
///
/// Keys are count values, entries are occurrences. The map is ordered so
/// iteration and CSV output are ascending in count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountHistogram {
    bins: BTreeMap<u64, u64>,
}

impl CountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples<I: IntoIterator<Item = u64>>(samples: I) -> Self {
        let mut h = Self::new();
        for s in samples {
            h.add(s);
        }
        h
    }

    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Self {
        let mut h = Self::new();
        for (count, occ) in pairs {
            h.add_n(count, occ);
        }
        h
    }

    pub fn add(&mut self, count: u64) {
        self.add_n(count, 1);
    }

    pub fn add_n(&mut self, count: u64, occurrences: u64) {
        if occurrences > 0 {
            *self.bins.entry(count).or_insert(0) += occurrences;
        }
    }

    /// Occurrences at an exact count value.
    pub fn occurrences(&self, count: u64) -> u64 {
        self.bins.get(&count).copied().unwrap_or(0)
    }

    /// Total number of recorded samples.
    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Largest count value present, `None` when empty.
    pub fn max_count(&self) -> Option<u64> {
        self.bins.keys().next_back().copied()
    }

    /// Smallest count value present, `None` when empty.
    pub fn min_count(&self) -> Option<u64> {
        self.bins.keys().next().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.bins.iter().map(|(&c, &o)| (c, o))
    }

    /// Sample mean. Errors on an empty histogram.
    pub fn mean(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let total = self.total() as f64;
        let sum: f64 = self.iter().map(|(c, o)| c as f64 * o as f64).sum();
        Ok(sum / total)
    }

    /// Sample variance (population form). Errors on an empty histogram.
    pub fn variance(&self) -> Result<f64> {
        let mean = self.mean()?;
        let total = self.total() as f64;
        let ss: f64 = self
            .iter()
            .map(|(c, o)| {
                let d = c as f64 - mean;
                d * d * o as f64
            })
            .sum();
        Ok(ss / total)
    }

    /// Occurrences strictly below `count`.
    pub fn mass_below(&self, count: u64) -> u64 {
        self.bins.range(..count).map(|(_, &o)| o).sum()
    }

    /// Occurrences at or above `count`.
    pub fn mass_at_or_above(&self, count: u64) -> u64 {
        self.bins.range(count..).map(|(_, &o)| o).sum()
    }

    /// Write as `count,occurrences` CSV, counts ascending.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "count,occurrences")?;
        for (count, occ) in self.iter() {
            writeln!(w, "{count},{occ}")?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parse the `count,occurrences` CSV form.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty histogram CSV".into()))??;
        if header.trim() != "count,occurrences" {
            return Err(Error::Format(format!(
                "expected header 'count,occurrences', got '{header}'"
            )));
        }
        let mut h = Self::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let (c, o) = t
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: missing comma", lineno + 2)))?;
            let count: u64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad count '{c}'", lineno + 2)))?;
            let occ: u64 = o
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad occurrences '{o}'", lineno + 2)))?;
            h.add_n(count, occ);
        }
        Ok(h)
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
