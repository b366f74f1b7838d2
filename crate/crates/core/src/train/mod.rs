//! Supervised training: Adam over softmax cross-entropy, shared by the spiking
//! network and the ReLU baselines.

mod adam;
pub mod bptt;

pub use adam::{adam_step, Adam, AdamConfig, Moments};

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::pam4::Class;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// SuperSpike steepness; unused by non-spiking models.
    pub surrogate_steepness: f64,
    pub rng_seed: u64,
    /// Tail fraction of the training set held out for checkpoint selection.
    pub validation_fraction: f64,
    /// Treat the reset as a constant in the backward pass.
    pub detach_reset: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            epochs: 10,
            surrogate_steepness: 10.0,
            rng_seed: 0,
            validation_fraction: 0.1,
            detach_reset: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(config("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(config("adam_eps must be nonnegative"));
        }
        if !(self.surrogate_steepness > 0.0) {
            return Err(config("surrogate_steepness must be positive"));
        }
        if self.batch_size == 0 {
            return Err(config("batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(config("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// A classifier with flat parameter blocks and a per-sample gradient.
pub trait Trainable: Clone {
    type Input;
    /// Per-sample working memory reused across calls.
    type Scratch: Default;

    fn param_blocks(&self) -> Vec<&[f64]>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
    fn predict(&self, x: &Self::Input, scratch: &mut Self::Scratch) -> Result<Class>;
    /// Adds the loss gradient for one sample to `grads` (laid out like
    /// [`Trainable::param_blocks`]) and returns the loss.
    fn accumulate_grad(
        &self,
        x: &Self::Input,
        label: Class,
        grads: &mut [Vec<f64>],
        scratch: &mut Self::Scratch,
    ) -> Result<f64>;
}

/// Indexed labeled samples.
pub trait SampleSource {
    type Input;
    fn len(&self) -> usize;
    fn sample(&self, index: usize) -> (Self::Input, Class);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batches processed so far.
    pub batch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Validation symbol error rate.
    pub ser: f64,
    /// Validation bit error rate.
    pub ber: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<M> {
    pub model: M,
    pub log: Vec<EpochRecord>,
    /// Epoch whose weights were returned; 0 means the initial weights.
    pub best_epoch: usize,
}

/// Softmax cross-entropy of `logits` against `label`, with `d loss / d logits`.
pub fn softmax_cross_entropy(logits: &[f64], label: Class) -> (f64, [f64; 4]) {
    debug_assert_eq!(logits.len(), 4);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; 4];
    let mut sum = 0.0;
    for (pk, &l) in p.iter_mut().zip(logits) {
        *pk = libm::exp(l - max);
        sum += *pk;
    }
    p.iter_mut().for_each(|pk| *pk /= sum);
    let loss = libm::log(sum) + max - logits[label.index()];
    p[label.index()] -= 1.0;
    (loss, p)
}

/// Splits `0..n` into a training head and a validation tail.
pub fn split_indices(n: usize, validation_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_valid = libm::ceil(n as f64 * validation_fraction) as usize;
    let n_valid = n_valid.min(n.saturating_sub(1));
    ((0..n - n_valid).collect(), (n - n_valid..n).collect())
}

/// Symbol and bit errors of `model` over `indices`.
pub fn count_errors<M, S>(model: &M, source: &S, indices: &[usize]) -> Result<(u64, u64)>
where
    M: Trainable,
    S: SampleSource<Input = M::Input>,
{
    let mut scratch = M::Scratch::default();
    let (mut sym, mut bit) = (0u64, 0u64);
    for &i in indices {
        let (x, label) = source.sample(i);
        let d = model.predict(&x, &mut scratch)?;
        if d != label {
            sym += 1;
            bit += d.bit_errors(label) as u64;
        }
    }
    Ok((sym, bit))
}

/// Mini-batch Adam training. Every epoch the training indices are reshuffled
/// from `cfg.rng_seed`; after every epoch the validation BER is measured and
/// the weights with the lowest value (latest on ties, the initial weights
/// included) are returned. Without validation indices the final weights are
/// returned. Batches are reduced sequentially in index order.
pub fn fit<M, S>(
    init: M,
    source: &S,
    train: &[usize],
    valid: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<M>>
where
    M: Trainable,
    S: SampleSource<Input = M::Input>,
{
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(FitOutcome {
            model: init,
            log: Vec::new(),
            best_epoch: 0,
        });
    }
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let score = |m: &M| -> Result<(f64, f64)> {
        if valid.is_empty() {
            return Ok((0.0, 0.0));
        }
        let (sym, bit) = count_errors(m, source, valid)?;
        let n = valid.len() as f64;
        Ok((sym as f64 / n, bit as f64 / (2.0 * n)))
    };

    let mut model = init;
    let sizes: Vec<usize> = model.param_blocks().iter().map(|b| b.len()).collect();
    let mut opt = Adam::new(cfg.adam(), sizes.iter().copied());
    let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut scratch = M::Scratch::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order = train.to_vec();

    let mut best = (score(&model)?.1, 0usize, model.clone());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut batch_no = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, label) = source.sample(i);
                batch_loss += model.accumulate_grad(&x, label, &mut grads, &mut scratch)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= inv));
            opt.step(&mut model.param_blocks_mut(), &grads);
            loss_sum += batch_loss;
            batch_no += 1;
        }
        let (ser, ber) = score(&model)?;
        let rec = EpochRecord {
            epoch,
            batch: batch_no,
            loss: loss_sum / order.len() as f64,
            ser,
            ber,
        };
        on_epoch(&rec);
        log.push(rec);
        if valid.is_empty() || ber <= best.0 {
            best = (ber, epoch, model.clone());
        }
    }
    Ok(FitOutcome {
        model: best.2,
        log,
        best_epoch: best.1,
    })
}
