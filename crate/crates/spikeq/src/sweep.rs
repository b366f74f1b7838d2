//! BER sweeps over a noise grid.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikeq_core::stats::{ber_confidence, count_bit_errors};

use crate::dataset::Dataset;
use crate::equalizer::{EqualizerKind, EqualizerSettings, Model};
use crate::error::{Error, Result};
use crate::files::{write_atomic, write_json};
use crate::link::{reference_variance, sigma2_from_db, LinkConfig};

pub const WORKERS_ENV: &str = "SPIKEQ_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub link: LinkConfig,
    /// Noise levels in dB relative to the noiseless photodiode output variance.
    pub noise_db: Vec<f64>,
    pub train_symbols: usize,
    pub test_symbols: usize,
    /// Symbols of the noiseless frame that calibrates the dB axis.
    pub calibration_symbols: usize,
    pub equalizers: Vec<EqualizerKind>,
    pub settings: EqualizerSettings,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            noise_db: vec![-19.0, -18.0, -17.0, -16.0, -15.0, -14.0, -13.0, -12.0],
            train_symbols: 100_000,
            test_symbols: 100_000,
            calibration_symbols: 100_000,
            equalizers: EqualizerKind::ALL.to_vec(),
            settings: EqualizerSettings::default(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.noise_db.is_empty() {
            return Err(Error::Config("noise grid is empty".into()));
        }
        if self.noise_db.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("noise grid values must be finite".into()));
        }
        if self.test_symbols == 0 || self.train_symbols == 0 || self.calibration_symbols == 0 {
            return Err(Error::Config("train, test and calibration sizes must be positive".into()));
        }
        if self.equalizers.is_empty() {
            return Err(Error::Config("no equalizers selected".into()));
        }
        self.settings.snn_train.validate()?;
        self.settings.ann_train.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub point: usize,
    pub equalizer: EqualizerKind,
    pub noise_db: f64,
    pub noise_sigma2: f64,
    pub bits_counted: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// 95% Wilson interval.
    pub ber_low: f64,
    pub ber_high: f64,
    pub seed: u64,
    pub config_hash: String,
    /// Empty on success; otherwise the error that aborted this point.
    pub failure: String,
}

impl BerRecord {
    pub fn failed(&self) -> bool {
        !self.failure.is_empty()
    }
}

/// Seeds of one grid point: link noise, training bits, test bits.
fn point_seeds(seed: u64, point: usize) -> [u64; 3] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((point as u64).to_le_bytes());
    let d = h.finalize();
    let word = |i: usize| u64::from_le_bytes(d[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    [word(0), word(1), word(2)]
}

/// Trains every equalizer on a fresh training frame and counts bit errors
/// on a held-out frame of the same link.
fn run_point(cfg: &SweepConfig, point: usize, sigma2: f64) -> Result<Vec<(EqualizerKind, u64, u64)>> {
    let [link_seed, train_seed, test_seed] = point_seeds(cfg.seed, point);
    let link = LinkConfig {
        noise_sigma2: sigma2,
        rng_seed: link_seed,
        ..cfg.link.clone()
    };
    let db = Some(cfg.noise_db[point]);
    let train = Dataset::generate(&link, cfg.train_symbols, train_seed, db)?;
    let test_link = LinkConfig {
        rng_seed: link_seed ^ 0x5eed,
        ..link
    };
    let test = Dataset::generate(&test_link, cfg.test_symbols, test_seed, db)?;
    let (train_labels, test_labels) = (train.labels(), test.labels());
    cfg.equalizers
        .iter()
        .map(|&kind| {
            let trained = Model::fit(kind, &train.y, &train_labels, &cfg.settings, |r| {
                log::debug!("point {point} {kind} epoch {} loss {:.4} ber {:.3e}", r.epoch, r.loss, r.ber)
            })?;
            let decided = trained.model.decide(&test.y)?;
            let errors = count_bit_errors(&decided, &test_labels);
            log::info!("point {point} ({:.1} dB) {kind}: {errors} bit errors", cfg.noise_db[point]);
            Ok((kind, errors, 2 * test.len() as u64))
        })
        .collect()
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Runs all grid points on `workers` threads. Records are ordered by grid
/// index then equalizer order and do not depend on the worker count. A
/// failing point yields failed records and the others proceed.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let reference = reference_variance(&cfg.link, cfg.calibration_symbols, cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let points: Vec<Vec<BerRecord>> = pool.install(|| {
        (0..cfg.noise_db.len())
            .into_par_iter()
            .map(|p| {
                let db = cfg.noise_db[p];
                let sigma2 = sigma2_from_db(db, reference);
                let record = |kind, errors: u64, bits: u64, failure: String| {
                    let (ber, lo, hi) = if bits > 0 {
                        let (lo, hi) = ber_confidence(errors, bits).expect("bits counted");
                        (errors as f64 / bits as f64, lo, hi)
                    } else {
                        (f64::NAN, f64::NAN, f64::NAN)
                    };
                    BerRecord {
                        point: p,
                        equalizer: kind,
                        noise_db: db,
                        noise_sigma2: sigma2,
                        bits_counted: bits,
                        bit_errors: errors,
                        ber,
                        ber_low: lo,
                        ber_high: hi,
                        seed: cfg.seed,
                        config_hash: hash.clone(),
                        failure,
                    }
                };
                match run_point(cfg, p, sigma2) {
                    Ok(res) => res.into_iter().map(|(k, e, b)| record(k, e, b, String::new())).collect(),
                    Err(e) => {
                        log::error!("grid point {p} ({db} dB) failed: {e}");
                        cfg.equalizers.iter().map(|&k| record(k, 0, 0, e.to_string())).collect()
                    }
                }
            })
            .collect()
    });
    Ok(points.into_iter().flatten().collect())
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a SweepConfig,
    config_hash: String,
    version: &'static str,
    git_revision: Option<String>,
    records: &'a Path,
    failed_points: Vec<usize>,
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

pub fn write_records(path: &Path, records: &[BerRecord]) -> Result<()> {
    write_atomic(path, |w| {
        let mut wr = csv::Writer::from_writer(&mut *w);
        for r in records {
            wr.serialize(r).map_err(Error::csv(path))?;
        }
        wr.flush().map_err(Error::io(path))?;
        drop(wr);
        w.flush().map_err(Error::io(path))
    })
}

/// Writes `ber.csv` and `manifest.json` into `dir`; returns their paths.
pub fn write_artifacts(dir: &Path, cfg: &SweepConfig, records: &[BerRecord]) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join("ber.csv");
    let manifest_path = dir.join("manifest.json");
    write_records(&csv_path, records)?;
    let mut failed: Vec<usize> = records.iter().filter(|r| r.failed()).map(|r| r.point).collect();
    failed.dedup();
    write_json(
        &manifest_path,
        &Manifest {
            config: cfg,
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION"),
            git_revision: git_revision(),
            records: Path::new("ber.csv"),
            failed_points: failed,
        },
    )?;
    Ok((csv_path, manifest_path))
}
