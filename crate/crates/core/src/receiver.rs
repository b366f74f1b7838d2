//! End-to-end fitting and decisions for each equalizer over a received stream.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::baselines::ann::{AnnArch, AnnParams, WindowSamples};
use crate::encoder::{EncodedStream, EncoderConfig};
use crate::error::{ensure_len, Result};
use crate::pam4::Class;
use crate::snn::{decide, forward_into, InitGain, NeuronParams, ReadoutParams, SnnParams, SnnTrace, SpikeFn};
use crate::train::bptt::{BackwardConfig, RasterSamples, SnnLearner};
use crate::train::{fit, split_indices, EpochRecord, TrainConfig, Trainable};

/// Architecture, encoding and grid settings of the spiking equalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnnConfig {
    pub n_tap: usize,
    pub neurons_per_sample: usize,
    pub n_hidden: usize,
    /// `beta / A`.
    pub beta_ratio: f64,
    pub kappa: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub hidden: NeuronParams,
    pub readout: ReadoutParams,
    pub init_gain: InitGain,
    pub init_seed: u64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            n_tap: 17,
            neurons_per_sample: 10,
            n_hidden: 40,
            beta_ratio: 0.1,
            kappa: 0.5,
            n_steps: 30,
            dt: 1.0,
            hidden: NeuronParams::default(),
            readout: ReadoutParams::default(),
            init_gain: InitGain::default(),
            init_seed: 1,
        }
    }
}

impl SnnConfig {
    /// Latest spike time the encoder may emit: the last grid step.
    pub fn t_max(&self) -> f64 {
        (self.n_steps.saturating_sub(1)) as f64 * self.dt
    }
}

/// Trained spiking equalizer: encoder plus network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnEqualizer {
    pub encoder: EncoderConfig,
    pub params: SnnParams,
}

/// Result of fitting a trainable equalizer.
#[derive(Debug, Clone)]
pub struct Fitted<E> {
    pub equalizer: E,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl SnnEqualizer {
    /// Untrained equalizer with the encoder calibrated on `y`.
    pub fn init(y: &[f64], cfg: &SnnConfig) -> Result<Self> {
        let encoder = EncoderConfig::from_samples(
            y,
            cfg.n_tap,
            cfg.neurons_per_sample,
            cfg.beta_ratio,
            cfg.kappa,
            cfg.t_max(),
            cfg.dt,
        )?;
        let params = SnnParams::init(
            encoder.n_inputs(),
            cfg.n_hidden,
            4,
            cfg.hidden,
            cfg.readout,
            cfg.n_steps,
            cfg.dt,
            cfg.init_gain,
            cfg.init_seed,
        )?;
        Ok(Self { encoder, params })
    }

    pub fn fit(
        y: &[f64],
        labels: &[Class],
        cfg: &SnnConfig,
        train: &TrainConfig,
        on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Fitted<Self>> {
        ensure_len("training labels", y.len(), labels.len())?;
        let init = Self::init(y, cfg)?;
        init.train(y, labels, train, on_epoch)
    }

    /// Trains the network weights; the encoder stays fixed.
    pub fn train(
        self,
        y: &[f64],
        labels: &[Class],
        train: &TrainConfig,
        on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Fitted<Self>> {
        ensure_len("training labels", y.len(), labels.len())?;
        let stream = EncodedStream::new(y, &self.encoder)?;
        let source = RasterSamples {
            stream: &stream,
            labels,
        };
        let (tr, va) = split_indices(y.len(), train.validation_fraction);
        let learner = SnnLearner {
            params: self.params,
            backward: BackwardConfig {
                surrogate_steepness: train.surrogate_steepness,
                detach_reset: train.detach_reset,
            },
        };
        let out = fit(learner, &source, &tr, &va, train, on_epoch)?;
        Ok(Fitted {
            equalizer: Self {
                encoder: self.encoder,
                params: out.model.params,
            },
            log: out.log,
            best_epoch: out.best_epoch,
        })
    }

    pub fn decide(&self, y: &[f64]) -> Result<Vec<Class>> {
        let stream = EncodedStream::new(y, &self.encoder)?;
        let mut trace = SnnTrace::default();
        (0..y.len())
            .map(|t| {
                forward_into(&stream.raster(t), &self.params, SpikeFn::Heaviside, &mut trace)?;
                Ok(decide(&trace).0)
            })
            .collect()
    }
}

/// ReLU equalizer over raw tap windows.
pub fn fit_ann(
    y: &[f64],
    labels: &[Class],
    arch: AnnArch,
    n_tap: usize,
    init_seed: u64,
    train: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Fitted<AnnParams>> {
    ensure_len("training labels", y.len(), labels.len())?;
    let mut init = AnnParams::init(arch, n_tap, init_seed);
    init.fit_normalization(y)?;
    let source = WindowSamples { y, labels, n_tap };
    let (tr, va) = split_indices(y.len(), train.validation_fraction);
    let out = fit(init, &source, &tr, &va, train, on_epoch)?;
    Ok(Fitted {
        equalizer: out.model,
        log: out.log,
        best_epoch: out.best_epoch,
    })
}

/// Decisions of an ANN over every window of `y`.
pub fn ann_decide(ann: &AnnParams, y: &[f64]) -> Result<Vec<Class>> {
    let n_tap = ann.n_inputs();
    let source = WindowSamples {
        y,
        labels: &[],
        n_tap,
    };
    let mut scratch = Default::default();
    let mut w = alloc::vec![0.0; n_tap];
    (0..y.len())
        .map(|t| {
            crate::window::fill_window(source.y, t, &mut w);
            ann.predict(&w, &mut scratch)
        })
        .collect()
}
