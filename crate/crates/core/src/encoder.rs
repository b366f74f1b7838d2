//! Latency spike encoding of received samples.
//!
//! Each sample of a tap window drives `neurons_per_sample` input neurons. Neuron
//! `i` owns a reference point `chi_i` and fires once at
//!
//! ```text
//! d = |A - |y - chi_i||
//! t = scale * ln(d / (d - beta))        (only when d > beta)
//! ```
//!
//! quantized to the simulation grid. A sample sitting on `chi_i` gives `d = A`,
//! the earliest spike. The outer absolute value is taken literally, so for
//! `|y - chi_i| > A` the distance grows again; with the default `A` (half the
//! training range) that branch is only reached at the opposite end of the range.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{config, ensure_len, Error, Result};

/// Encoder settings, stored with model checkpoints so inference reproduces
/// training-time encoding exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_tap: usize,
    pub neurons_per_sample: usize,
    /// Reference point of each neuron, strictly increasing.
    pub refs: Vec<f64>,
    /// Distance offset `A`.
    pub a: f64,
    /// Cutoff `beta`, `0 < beta < A`.
    pub beta: f64,
    /// Multiplier on `t_max / ln(A / (A - beta))` giving the log scale.
    pub kappa: f64,
    /// Latest admissible spike time.
    pub t_max: f64,
    /// Time-grid step.
    pub dt: f64,
}

impl EncoderConfig {
    /// Derives references, `A` and `beta` from the empirical range of `y`:
    /// references span `[min, max]` uniformly, `A` is half the range and
    /// `beta = beta_ratio * A`.
    pub fn from_samples(
        y: &[f64],
        n_tap: usize,
        neurons_per_sample: usize,
        beta_ratio: f64,
        kappa: f64,
        t_max: f64,
        dt: f64,
    ) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("encoder calibration samples"));
        }
        let (lo, hi) = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !(hi > lo) {
            return Err(Error::Degenerate("calibration samples have zero range".into()));
        }
        let refs = if neurons_per_sample == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            let step = (hi - lo) / (neurons_per_sample - 1) as f64;
            (0..neurons_per_sample).map(|i| lo + step * i as f64).collect()
        };
        let a = 0.5 * (hi - lo);
        let cfg = Self {
            n_tap,
            neurons_per_sample,
            refs,
            a,
            beta: beta_ratio * a,
            kappa,
            t_max,
            dt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tap == 0 || self.n_tap.is_multiple_of(2) {
            return Err(config("n_tap must be odd"));
        }
        if self.neurons_per_sample == 0 {
            return Err(config("neurons_per_sample must be positive"));
        }
        ensure_len("encoder refs", self.neurons_per_sample, self.refs.len())?;
        if self.refs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config("encoder refs must be strictly increasing"));
        }
        if !(self.beta > 0.0 && self.beta < self.a) {
            return Err(config("encoder requires 0 < beta < A"));
        }
        if !(self.t_max > 0.0 && self.dt > 0.0 && self.kappa > 0.0) {
            return Err(config("encoder t_max, dt and kappa must be positive"));
        }
        Ok(())
    }

    /// Number of input neurons seen by the network.
    pub fn n_inputs(&self) -> usize {
        self.n_tap * self.neurons_per_sample
    }

    /// Factor multiplying the log-distance.
    pub fn scale(&self) -> f64 {
        self.kappa * self.t_max / libm::log(self.a / (self.a - self.beta))
    }

    /// Last grid index that still lies within `t_max`.
    pub fn max_step(&self) -> u32 {
        libm::floor(self.t_max / self.dt + 1e-9) as u32
    }
}

/// Spike times for one tap window on the simulation grid.
///
/// Entry `(r, i)` is the step index of neuron `i` of tap `r`, or `None` when
/// that neuron stays silent. A spike at step 0 is the strongest evidence and is
/// distinct from "no spike".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub n_tap: usize,
    pub neurons_per_sample: usize,
    pub steps: Vec<Option<u32>>,
}

impl SpikeRaster {
    pub fn silent(n_tap: usize, neurons_per_sample: usize) -> Self {
        Self {
            n_tap,
            neurons_per_sample,
            steps: vec![None; n_tap * neurons_per_sample],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.steps.len()
    }

    pub fn get(&self, tap: usize, neuron: usize) -> Option<u32> {
        self.steps[tap * self.neurons_per_sample + neuron]
    }

    pub fn row(&self, tap: usize) -> &[Option<u32>] {
        let n = self.neurons_per_sample;
        &self.steps[tap * n..(tap + 1) * n]
    }

    pub fn spike_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_some()).count()
    }

    /// `(step, input index)` of every spike.
    pub fn events(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.steps
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|step| (step, i)))
    }
}

/// Spike step of every neuron for a single sample value.
pub fn encode_sample(y: f64, cfg: &EncoderConfig) -> Vec<Option<u32>> {
    let mut out = vec![None; cfg.neurons_per_sample];
    encode_sample_into(y, cfg, &mut out);
    out
}

fn encode_sample_into(y: f64, cfg: &EncoderConfig, out: &mut [Option<u32>]) {
    let scale = cfg.scale();
    let max_step = cfg.max_step();
    for (slot, &chi) in out.iter_mut().zip(&cfg.refs) {
        let d = (cfg.a - (y - chi).abs()).abs();
        *slot = if d > cfg.beta && d.is_finite() {
            let t = scale * libm::log(d / (d - cfg.beta));
            let step = libm::round(t / cfg.dt);
            (step <= max_step as f64).then_some(step as u32)
        } else {
            None
        };
    }
}

/// Encodes a window of exactly `n_tap` samples.
pub fn encode_window(window: &[f64], cfg: &EncoderConfig) -> Result<SpikeRaster> {
    ensure_len("encoder window", cfg.n_tap, window.len())?;
    let mut raster = SpikeRaster::silent(cfg.n_tap, cfg.neurons_per_sample);
    for (row, &y) in raster
        .steps
        .chunks_exact_mut(cfg.neurons_per_sample)
        .zip(window)
    {
        encode_sample_into(y, cfg, row);
    }
    Ok(raster)
}

/// Per-sample encodings of a whole received stream. Windows are assembled from
/// these with edge replication, so overlapping windows share encodings.
#[derive(Debug, Clone)]
pub struct EncodedStream {
    n_tap: usize,
    neurons_per_sample: usize,
    per_sample: Vec<Option<u32>>,
}

impl EncodedStream {
    pub fn new(y: &[f64], cfg: &EncoderConfig) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("received stream"));
        }
        let n = cfg.neurons_per_sample;
        let mut per_sample = vec![None; y.len() * n];
        for (row, &v) in per_sample.chunks_exact_mut(n).zip(y) {
            encode_sample_into(v, cfg, row);
        }
        Ok(Self {
            n_tap: cfg.n_tap,
            neurons_per_sample: n,
            per_sample,
        })
    }

    pub fn len(&self) -> usize {
        self.per_sample.len() / self.neurons_per_sample
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    /// Raster of the window centered on symbol `t`.
    pub fn raster(&self, t: usize) -> SpikeRaster {
        let n = self.neurons_per_sample;
        let half = self.n_tap / 2;
        let last = self.len() - 1;
        let mut steps = Vec::with_capacity(self.n_tap * n);
        for r in (0..self.n_tap).map(|k| (t + k).saturating_sub(half).min(last)) {
            steps.extend_from_slice(&self.per_sample[r * n..(r + 1) * n]);
        }
        SpikeRaster {
            n_tap: self.n_tap,
            neurons_per_sample: n,
            steps,
        }
    }
}
