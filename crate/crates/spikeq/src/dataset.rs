//! Labeled datasets: a CSV of symbols and received samples plus a JSON
//! sidecar holding the link configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikeq_core::pam4::{map_pam4, BitPair, Class, SymbolFrame};

use crate::error::{Error, Result};
use crate::files::{read_json, write_atomic, write_json};
use crate::link::{random_bits, simulate_link, LinkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub link: LinkConfig,
    /// Noise level relative to the noiseless photodiode output variance,
    /// when the dataset was generated from a dB setting.
    pub noise_db: Option<f64>,
    pub symbols: usize,
    /// Seed of the transmitted bits.
    pub bit_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub frame: SymbolFrame,
    pub y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    symbol_index: usize,
    b1: u8,
    b2: u8,
    amplitude: f64,
    y: f64,
}

impl Dataset {
    /// Simulates `symbols` random symbols drawn from `bit_seed` over `link`.
    pub fn generate(link: &LinkConfig, symbols: usize, bit_seed: u64, noise_db: Option<f64>) -> Result<Self> {
        let out = simulate_link(&random_bits(symbols, bit_seed), link)?;
        Ok(Self {
            meta: DatasetMeta {
                link: link.clone(),
                noise_db,
                symbols,
                bit_seed,
            },
            frame: out.frame,
            y: out.y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn labels(&self) -> Vec<Class> {
        self.frame.classes().collect()
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        let mut p = csv.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut wr = csv::Writer::from_writer(w);
            for (i, (bits, y)) in self.frame.bits.iter().zip(&self.y).enumerate() {
                wr.serialize(Row {
                    symbol_index: i,
                    b1: bits.b1 as u8,
                    b2: bits.b2 as u8,
                    amplitude: self.frame.amplitudes[i],
                    y: *y,
                })
                .map_err(Error::csv(path))?;
            }
            wr.flush().map_err(Error::io(path))
        })?;
        write_json(&Self::sidecar_path(path), &self.meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: DatasetMeta = read_json(&Self::sidecar_path(path))?;
        let mut rd = csv::Reader::from_path(path).map_err(Error::csv(path))?;
        let mut bits = Vec::new();
        let mut y = Vec::new();
        for (i, row) in rd.deserialize::<Row>().enumerate() {
            let row = row.map_err(Error::csv(path))?;
            if row.symbol_index != i || row.b1 > 1 || row.b2 > 1 {
                return Err(Error::Config(format!("{}: malformed row {i}", path.display())));
            }
            let b = BitPair::new(row.b1 == 1, row.b2 == 1);
            if b.amplitude() != row.amplitude {
                return Err(Error::Config(format!("{}: row {i} amplitude disagrees with bits", path.display())));
            }
            bits.push(b);
            y.push(row.y);
        }
        Ok(Self {
            meta,
            frame: map_pam4(&bits),
            y,
        })
    }
}
