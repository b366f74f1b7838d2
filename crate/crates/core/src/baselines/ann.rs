//! Feedforward ReLU classifiers over raw tap windows.

use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;
use crate::pam4::Class;
use crate::train::{softmax_cross_entropy, SampleSource, Trainable};
use crate::window::fill_window;

/// Hidden-layer layouts of the two reference networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnArch {
    /// One hidden layer of 40.
    Ann1,
    /// Hidden layers of 34 and 10.
    Ann2,
}

impl AnnArch {
    pub fn hidden_widths(self) -> &'static [usize] {
        match self {
            AnnArch::Ann1 => &[40],
            AnnArch::Ann2 => &[34, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[out x in]`
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// ReLU network with a linear 4-way output and per-feature input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnParams {
    pub arch: AnnArch,
    pub layers: Vec<Dense>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

impl AnnParams {
    /// He-initialized weights, zero biases, identity normalization.
    pub fn init(arch: AnnArch, n_inputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(arch.hidden_widths());
        widths.push(4);
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                w: Matrix::gaussian(w[1], w[0], libm::sqrt(2.0 / w[0] as f64), &mut rng),
                b: vec![0.0; w[1]],
            })
            .collect();
        Self {
            arch,
            layers,
            input_mean: vec![0.0; n_inputs],
            input_std: vec![1.0; n_inputs],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.input_mean.len()
    }

    /// Widths of the hidden layers as built.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.w.rows).collect()
    }

    /// Sets the input standardization from training windows.
    pub fn fit_normalization(&mut self, y: &[f64]) -> Result<()> {
        if y.is_empty() {
            return Err(Error::Empty("normalization samples"));
        }
        let n = self.n_inputs();
        let mut w = vec![0.0; n];
        let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
        for t in 0..y.len() {
            fill_window(y, t, &mut w);
            for i in 0..n {
                s1[i] += w[i];
                s2[i] += w[i] * w[i];
            }
        }
        let count = y.len() as f64;
        for i in 0..n {
            let mean = s1[i] / count;
            let var = (s2[i] / count - mean * mean).max(0.0);
            self.input_mean[i] = mean;
            self.input_std[i] = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        }
        Ok(())
    }

    /// Output logits for a raw input window.
    pub fn logits(&self, x: &[f64]) -> Result<[f64; 4]> {
        let mut acts = Activations::default();
        self.run(x, &mut acts)?;
        let last = acts.post.last().expect("output layer");
        Ok([last[0], last[1], last[2], last[3]])
    }

    pub fn decide(&self, x: &[f64]) -> Result<Class> {
        let mut acts = Activations::default();
        self.predict(&x.to_vec(), &mut acts)
    }

    fn run(&self, x: &[f64], acts: &mut Activations) -> Result<()> {
        ensure_len("ann input", self.n_inputs(), x.len())?;
        let depth = self.layers.len();
        acts.post.resize(depth + 1, Vec::new());
        let input = &mut acts.post[0];
        input.clear();
        input.extend(
            x.iter()
                .zip(&self.input_mean)
                .zip(&self.input_std)
                .map(|((v, m), s)| (v - m) / s),
        );
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.post.split_at_mut(l + 1);
            let prev = &done[l];
            let out = &mut rest[0];
            out.clear();
            for r in 0..layer.w.rows {
                let z: f64 = layer.w.row(r).iter().zip(prev.iter()).map(|(a, b)| a * b).sum::<f64>() + layer.b[r];
                out.push(if l + 1 < depth { z.max(0.0) } else { z });
            }
        }
        let last = acts.post.last().expect("output layer");
        if let Some(i) = last.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "ann logits",
                step: 0,
                index: i,
            });
        }
        Ok(())
    }
}

/// Layer outputs of one forward pass (`post[0]` is the normalized input).
#[derive(Debug, Clone, Default)]
pub struct Activations {
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

fn argmax(v: &[f64]) -> Class {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = k;
        }
    }
    Class::new(best).expect("four logits")
}

impl Trainable for AnnParams {
    type Input = Vec<f64>;
    type Scratch = Activations;

    fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.data.as_slice(), l.b.as_slice()])
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.data.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }

    fn predict(&self, x: &Vec<f64>, acts: &mut Activations) -> Result<Class> {
        self.run(x, acts)?;
        Ok(argmax(acts.post.last().expect("output layer")))
    }

    fn accumulate_grad(
        &self,
        x: &Vec<f64>,
        label: Class,
        grads: &mut [Vec<f64>],
        acts: &mut Activations,
    ) -> Result<f64> {
        self.run(x, acts)?;
        let (loss, dlogits) = softmax_cross_entropy(acts.post.last().expect("output layer"), label);
        acts.delta.clear();
        acts.delta.extend_from_slice(&dlogits);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts.post[l];
            let (gw, gb) = {
                let (a, b) = grads[2 * l..2 * l + 2].split_at_mut(1);
                (&mut a[0], &mut b[0])
            };
            for (r, &d) in acts.delta.iter().enumerate() {
                gb[r] += d;
                if d == 0.0 {
                    continue;
                }
                for (g, &a) in gw[r * layer.w.cols..(r + 1) * layer.w.cols].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            acts.next_delta.clear();
            acts.next_delta.resize(layer.w.cols, 0.0);
            for (r, &d) in acts.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (nd, &w) in acts.next_delta.iter_mut().zip(layer.w.row(r)) {
                    *nd += d * w;
                }
            }
            // ReLU derivative of the layer below: post > 0.
            for (nd, &a) in acts.next_delta.iter_mut().zip(input) {
                if a <= 0.0 {
                    *nd = 0.0;
                }
            }
            core::mem::swap(&mut acts.delta, &mut acts.next_delta);
        }
        Ok(loss)
    }
}

/// Raw tap windows of a received stream paired with symbol classes.
#[derive(Debug, Clone, Copy)]
pub struct WindowSamples<'a> {
    pub y: &'a [f64],
    pub labels: &'a [Class],
    pub n_tap: usize,
}

impl SampleSource for WindowSamples<'_> {
    type Input = Vec<f64>;

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn sample(&self, index: usize) -> (Vec<f64>, Class) {
        let mut w = vec![0.0; self.n_tap];
        fill_window(self.y, index, &mut w);
        (w, self.labels[index])
    }
}
