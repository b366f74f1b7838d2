//! Backpropagation through time for the spiking equalizer.
//!
//! The backward pass walks the recorded trace in reverse, mirroring the
//! forward recursion in [`crate::snn`]. Adjoints (`x_bar = dL/dx`) obey
//!
//! ```text
//! vo_bar[n]  = g[n] + b_o vo_bar[n+1]            g: loss grad at the peak step
//! io_bar[n]  = a_o io_bar[n+1] + c_o vo_bar[n+1]
//! z_bar[n]   = W_ho^T io_bar[n]  (+ (v_reset - v_pre[n]) v_bar[n] if reset is attached)
//! v_bar[n]   = b vpre_bar[n+1]
//! vpre_bar[n]= v_bar[n] (1 - z[n]) + z_bar[n] g_s(v_pre[n] - threshold)
//! i_bar[n]   = a i_bar[n+1] + c vpre_bar[n+1]
//! dW_ho      = sum_n io_bar[n] z[n]^T,   dW_ih[:, i] = sum over spikes of input i at n of i_bar[n]
//! ```
//!
//! where `g_s` is the SuperSpike surrogate. The max over time routes its
//! gradient to the first step attaining the maximum.

use alloc::vec;
use alloc::vec::Vec;

use super::{softmax_cross_entropy, SampleSource, Trainable};
use crate::encoder::{EncodedStream, SpikeRaster};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pam4::Class;
use crate::snn::{bucket_events, decide, forward_into, Propagator, SnnParams, SnnTrace, SpikeFn};

/// SuperSpike surrogate derivative `1 / (1 + steepness |v - threshold|)^2`.
#[inline]
pub fn surrogate_grad(v_pre: f64, threshold: f64, steepness: f64) -> f64 {
    let d = 1.0 + steepness * (v_pre - threshold).abs();
    1.0 / (d * d)
}

fn ensure_finite_trace(trace: &SnnTrace) -> Result<()> {
    match trace.v_o.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(p) => Err(Error::NonFinite {
            what: "readout trace",
            step: p / trace.n_out.max(1),
            index: p % trace.n_out.max(1),
        }),
    }
}

/// Cross-entropy of the softmax over per-class peak readout voltages.
pub fn loss(trace: &SnnTrace, label: Class) -> Result<f64> {
    ensure_finite_trace(trace)?;
    let peaks: Vec<f64> = trace.readout_peaks().iter().map(|p| p.0).collect();
    Ok(softmax_cross_entropy(&peaks, label).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardConfig {
    pub surrogate_steepness: f64,
    pub detach_reset: bool,
}

impl Default for BackwardConfig {
    fn default() -> Self {
        Self {
            surrogate_steepness: 10.0,
            detach_reset: true,
        }
    }
}

/// Inputs and recorded states of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub raster: SpikeRaster,
    pub spike_fn: SpikeFn,
    pub trace: SnnTrace,
}

impl GradientTape {
    pub fn record(raster: SpikeRaster, params: &SnnParams, spike_fn: SpikeFn) -> Result<Self> {
        let mut trace = SnnTrace::default();
        forward_into(&raster, params, spike_fn, &mut trace)?;
        Ok(Self {
            raster,
            spike_fn,
            trace,
        })
    }

    /// Re-runs the forward pass from the stored inputs.
    pub fn replay(&self, params: &SnnParams) -> Result<SnnTrace> {
        let mut trace = SnnTrace::default();
        forward_into(&self.raster, params, self.spike_fn, &mut trace)?;
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnGrads {
    pub w_ih: Matrix,
    pub w_ho: Matrix,
}

/// Adjoint buffers reused across samples.
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    i_bar: Vec<f64>,
    vpre_bar_next: Vec<f64>,
    z_bar: Vec<f64>,
    io_bar: Vec<f64>,
    vo_bar: Vec<f64>,
}

/// Loss and weight gradients for one recorded sample.
pub fn backward(tape: &GradientTape, params: &SnnParams, label: Class, cfg: &BackwardConfig) -> Result<(f64, SnnGrads)> {
    let mut g_ih = vec![0.0; params.w_ih.data.len()];
    let mut g_ho = vec![0.0; params.w_ho.data.len()];
    let loss = backward_accumulate(
        &tape.raster,
        &tape.trace,
        tape.spike_fn,
        params,
        label,
        cfg,
        &mut g_ih,
        &mut g_ho,
        &mut BackwardScratch::default(),
    )?;
    let grads = SnnGrads {
        w_ih: Matrix {
            rows: params.w_ih.rows,
            cols: params.w_ih.cols,
            data: g_ih,
        },
        w_ho: Matrix {
            rows: params.w_ho.rows,
            cols: params.w_ho.cols,
            data: g_ho,
        },
    };
    if let Some(p) = grads.w_ih.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "w_ih gradient",
            step: 0,
            index: p,
        });
    }
    if let Some(p) = grads.w_ho.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "w_ho gradient",
            step: 0,
            index: p,
        });
    }
    Ok((loss, grads))
}

/// Adds the gradients of one sample into `g_ih` / `g_ho` and returns its loss.
#[allow(clippy::too_many_arguments)]
pub fn backward_accumulate(
    raster: &SpikeRaster,
    trace: &SnnTrace,
    spike_fn: SpikeFn,
    params: &SnnParams,
    label: Class,
    cfg: &BackwardConfig,
    g_ih: &mut [f64],
    g_ho: &mut [f64],
    s: &mut BackwardScratch,
) -> Result<f64> {
    ensure_finite_trace(trace)?;
    let (nh, no, steps) = (trace.n_hidden, trace.n_out, trace.n_steps);
    let peaks = trace.readout_peaks();
    let logits: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let (loss, dlogits) = softmax_cross_entropy(&logits, label);

    let hp = params.hidden;
    let hprop = Propagator::new(hp.tau_mem, hp.tau_syn, params.dt);
    let oprop = Propagator::new(params.readout.tau_mem, params.readout.tau_syn, params.dt);
    let steepness = match spike_fn {
        SpikeFn::Heaviside => cfg.surrogate_steepness,
        SpikeFn::FastSigmoid { steepness } => steepness,
    };

    s.i_bar.clear();
    s.i_bar.resize(steps * nh, 0.0);
    s.vpre_bar_next.clear();
    s.vpre_bar_next.resize(nh, 0.0);
    s.z_bar.clear();
    s.z_bar.resize(nh, 0.0);
    s.io_bar.clear();
    s.io_bar.resize(no, 0.0);
    s.vo_bar.clear();
    s.vo_bar.resize(no, 0.0);

    for n in (0..steps).rev() {
        // Readout: io_bar[n] needs vo_bar[n+1] and io_bar[n+1].
        for k in 0..no {
            let vo_next = s.vo_bar[k];
            s.io_bar[k] = oprop.syn_decay * s.io_bar[k] + oprop.current_gain * vo_next;
            let direct = if peaks[k].1 == n { dlogits[k] } else { 0.0 };
            s.vo_bar[k] = direct + oprop.mem_decay * vo_next;
        }
        let z = &trace.spikes[n * nh..(n + 1) * nh];
        for k in 0..no {
            let io = s.io_bar[k];
            if io == 0.0 {
                continue;
            }
            let row = &mut g_ho[k * nh..(k + 1) * nh];
            for (g, &zj) in row.iter_mut().zip(z) {
                *g += io * zj;
            }
        }
        for j in 0..nh {
            let mut zb = 0.0;
            for k in 0..no {
                zb += params.w_ho.data[k * nh + j] * s.io_bar[k];
            }
            s.z_bar[j] = zb;
        }

        // Hidden: i_bar[n] uses vpre_bar[n+1] before it is overwritten.
        let vpre = &trace.v_h_pre[n * nh..(n + 1) * nh];
        let i_next_start = (n + 1) * nh;
        for j in 0..nh {
            let i_next = if n + 1 < steps {
                s.i_bar[i_next_start + j]
            } else {
                0.0
            };
            s.i_bar[n * nh + j] = hprop.syn_decay * i_next + hprop.current_gain * s.vpre_bar_next[j];

            let v_bar = hprop.mem_decay * s.vpre_bar_next[j];
            let mut zb = s.z_bar[j];
            if !cfg.detach_reset {
                zb += v_bar * (hp.v_reset - vpre[j]);
            }
            let sg = surrogate_grad(vpre[j], hp.threshold, steepness);
            s.vpre_bar_next[j] = v_bar * (1.0 - z[j]) + zb * sg;
        }
    }

    let (order, offsets) = bucket_events(raster, steps);
    let n_in = params.w_ih.cols;
    for n in 0..steps {
        let ib = &s.i_bar[n * nh..(n + 1) * nh];
        for &src in &order[offsets[n]..offsets[n + 1]] {
            for (j, &v) in ib.iter().enumerate() {
                g_ih[j * n_in + src] += v;
            }
        }
    }
    Ok(loss)
}

/// Reusable per-sample buffers for [`SnnLearner`].
#[derive(Debug, Clone, Default)]
pub struct SnnScratch {
    trace: SnnTrace,
    backward: BackwardScratch,
}

/// Spiking network wrapped with its backward-pass settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnLearner {
    pub params: SnnParams,
    pub backward: BackwardConfig,
}

impl Trainable for SnnLearner {
    type Input = SpikeRaster;
    type Scratch = SnnScratch;

    fn param_blocks(&self) -> Vec<&[f64]> {
        vec![&self.params.w_ih.data, &self.params.w_ho.data]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.params.w_ih.data, &mut self.params.w_ho.data]
    }

    fn predict(&self, x: &SpikeRaster, scratch: &mut SnnScratch) -> Result<Class> {
        forward_into(x, &self.params, SpikeFn::Heaviside, &mut scratch.trace)?;
        Ok(decide(&scratch.trace).0)
    }

    fn accumulate_grad(
        &self,
        x: &SpikeRaster,
        label: Class,
        grads: &mut [Vec<f64>],
        scratch: &mut SnnScratch,
    ) -> Result<f64> {
        forward_into(x, &self.params, SpikeFn::Heaviside, &mut scratch.trace)?;
        let (g_ih, rest) = grads.split_at_mut(1);
        backward_accumulate(
            x,
            &scratch.trace,
            SpikeFn::Heaviside,
            &self.params,
            label,
            &self.backward,
            &mut g_ih[0],
            &mut rest[0],
            &mut scratch.backward,
        )
    }
}

/// Windows of an encoded stream paired with their symbol classes.
#[derive(Debug, Clone, Copy)]
pub struct RasterSamples<'a> {
    pub stream: &'a EncodedStream,
    pub labels: &'a [Class],
}

impl SampleSource for RasterSamples<'_> {
    type Input = SpikeRaster;

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn sample(&self, index: usize) -> (SpikeRaster, Class) {
        (self.stream.raster(index), self.labels[index])
    }
}
