//! Per-class histograms of equalizer output on a shared bin grid.

use std::path::Path;

use serde::Serialize;
use spikeq_core::pam4::Class;

use crate::error::{Error, Result};
use crate::files::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges; the last bin is closed.
    pub edges: Vec<f64>,
    /// Counts per bin for each class.
    pub counts: Vec<[u64; 4]>,
}

#[derive(Serialize)]
struct Row {
    bin_low: f64,
    bin_high: f64,
    class0: u64,
    class1: u64,
    class2: u64,
    class3: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut wr = csv::Writer::from_writer(w);
            for (i, c) in self.counts.iter().enumerate() {
                wr.serialize(Row {
                    bin_low: self.edges[i],
                    bin_high: self.edges[i + 1],
                    class0: c[0],
                    class1: c[1],
                    class2: c[2],
                    class3: c[3],
                })
                .map_err(Error::csv(path))?;
            }
            wr.flush().map_err(Error::io(path))
        })
    }
}

/// Bins `values` by class over `[min, max]` of the values.
pub fn export_histogram(values: &[f64], labels: &[Class], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(spikeq_core::Error::Empty("histogram values").into());
    }
    if values.len() != labels.len() {
        return Err(Error::Config("histogram values and labels differ in length".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("histogram values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![[0u64; 4]; bins];
    for (&v, c) in values.iter().zip(labels) {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b][c.index()] += 1;
    }
    Ok(Histogram { edges, counts })
}
