//! The four receivers behind one interface, and their checkpoint format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spikeq_core::baselines::ann::{AnnArch, AnnParams};
use spikeq_core::baselines::lmmse::LmmseEqualizer;
use spikeq_core::pam4::Class;
use spikeq_core::receiver::{ann_decide, fit_ann, SnnConfig, SnnEqualizer};
use spikeq_core::train::{EpochRecord, TrainConfig};

use crate::error::{Error, Result};
use crate::files::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EqualizerKind {
    Lmmse,
    Ann1,
    Ann2,
    Snn,
}

impl EqualizerKind {
    pub const ALL: [EqualizerKind; 4] = [Self::Lmmse, Self::Ann1, Self::Ann2, Self::Snn];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lmmse => "lmmse",
            Self::Ann1 => "ann1",
            Self::Ann2 => "ann2",
            Self::Snn => "snn",
        }
    }
}

impl fmt::Display for EqualizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EqualizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown equalizer {s:?}")))
    }
}

/// Per-equalizer fitting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EqualizerSettings {
    /// Window length of the LMMSE filter and the ANN inputs.
    pub n_tap: usize,
    pub snn: SnnConfig,
    pub snn_train: TrainConfig,
    pub ann_train: TrainConfig,
    pub ann_init_seed: u64,
}

impl Default for EqualizerSettings {
    fn default() -> Self {
        let train = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 128,
            epochs: 20,
            ..TrainConfig::default()
        };
        Self {
            n_tap: 17,
            snn: SnnConfig::default(),
            snn_train: train,
            ann_train: train,
            ann_init_seed: 1,
        }
    }
}

/// A fitted receiver; serialized with its kind as a tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Lmmse(LmmseEqualizer),
    Ann1(AnnParams),
    Ann2(AnnParams),
    Snn(SnnEqualizer),
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub log: Vec<EpochRecord>,
}

impl Model {
    pub fn kind(&self) -> EqualizerKind {
        match self {
            Model::Lmmse(_) => EqualizerKind::Lmmse,
            Model::Ann1(_) => EqualizerKind::Ann1,
            Model::Ann2(_) => EqualizerKind::Ann2,
            Model::Snn(_) => EqualizerKind::Snn,
        }
    }

    pub fn fit(
        kind: EqualizerKind,
        y: &[f64],
        labels: &[Class],
        settings: &EqualizerSettings,
        on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Trained> {
        let ann = |arch, on_epoch| -> Result<(AnnParams, Vec<EpochRecord>)> {
            let f = fit_ann(y, labels, arch, settings.n_tap, settings.ann_init_seed, &settings.ann_train, on_epoch)?;
            Ok((f.equalizer, f.log))
        };
        let (model, log) = match kind {
            EqualizerKind::Lmmse => (Model::Lmmse(LmmseEqualizer::fit(y, labels, settings.n_tap)?), Vec::new()),
            EqualizerKind::Ann1 => {
                let (p, log) = ann(AnnArch::Ann1, on_epoch)?;
                (Model::Ann1(p), log)
            }
            EqualizerKind::Ann2 => {
                let (p, log) = ann(AnnArch::Ann2, on_epoch)?;
                (Model::Ann2(p), log)
            }
            EqualizerKind::Snn => {
                let f = SnnEqualizer::fit(y, labels, &settings.snn, &settings.snn_train, on_epoch)?;
                (Model::Snn(f.equalizer), f.log)
            }
        };
        Ok(Trained { model, log })
    }

    pub fn decide(&self, y: &[f64]) -> Result<Vec<Class>> {
        Ok(match self {
            Model::Lmmse(m) => m.decide(y),
            Model::Ann1(m) | Model::Ann2(m) => ann_decide(m, y)?,
            Model::Snn(m) => m.decide(y)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
