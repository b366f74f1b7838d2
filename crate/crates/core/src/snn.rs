//! Time-stepped LIF hidden layer and LI readout.
//!
//! Between input events both layers are linear, so each step uses the exact
//! propagator of
//!
//! ```text
//! tau_m dv/dt = -(v - v_leak) + I,    tau_syn dI/dt = -I
//! ```
//!
//! over one step of length `dt`:
//!
//! ```text
//! v_pre[n] = v_leak + b (v[n-1] - v_leak) + c I[n-1]
//! I[n]     = a I[n-1] + W s[n]
//! ```
//!
//! with `a = exp(-dt/tau_syn)`, `b = exp(-dt/tau_m)` and
//! `c = tau_syn / (tau_syn - tau_m) * (a - b)`. A spike arriving at step `n`
//! therefore reaches the membrane from step `n + 1` on. Hidden neurons spike
//! when `v_pre >= threshold` and are set to `v_reset` in the same step; there is
//! no refractory period.

use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::SpikeRaster;
use crate::error::{config, ensure_len, Error, Result};
use crate::matrix::Matrix;
use crate::pam4::{BitPair, Class};

/// Constants of the spiking hidden neurons. Times are in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub tau_mem: f64,
    pub tau_syn: f64,
    /// Spike threshold; `f64::INFINITY` disables spiking.
    pub threshold: f64,
    pub v_leak: f64,
    pub v_reset: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            tau_mem: 10.0,
            tau_syn: 5.0,
            threshold: 1.0,
            v_leak: 0.0,
            v_reset: 0.0,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        validate_time_constants(self.tau_mem, self.tau_syn)?;
        if !(self.threshold > self.v_leak) || !self.v_leak.is_finite() {
            return Err(config("threshold must exceed v_leak"));
        }
        if !(self.v_reset <= self.v_leak) {
            return Err(config("v_reset must not exceed v_leak"));
        }
        Ok(())
    }
}

/// Constants of the non-spiking readout neurons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutParams {
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub v_leak: f64,
}

impl Default for ReadoutParams {
    fn default() -> Self {
        Self {
            tau_mem: 10.0,
            tau_syn: 5.0,
            v_leak: 0.0,
        }
    }
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<()> {
        validate_time_constants(self.tau_mem, self.tau_syn)?;
        if !self.v_leak.is_finite() {
            return Err(config("readout v_leak must be finite"));
        }
        Ok(())
    }
}

fn validate_time_constants(tau_mem: f64, tau_syn: f64) -> Result<()> {
    if !(tau_mem > 0.0 && tau_syn > 0.0) || !tau_mem.is_finite() || !tau_syn.is_finite() {
        return Err(config("time constants must be positive and finite"));
    }
    if (tau_mem - tau_syn).abs() <= 1e-12 * tau_mem.max(tau_syn) {
        return Err(config("tau_mem == tau_syn is not supported"));
    }
    Ok(())
}

/// One-step propagator coefficients of the linear membrane/current system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    /// `exp(-dt / tau_syn)`
    pub syn_decay: f64,
    /// `exp(-dt / tau_mem)`
    pub mem_decay: f64,
    /// Contribution of the previous current to the next membrane value.
    pub current_gain: f64,
}

impl Propagator {
    pub fn new(tau_mem: f64, tau_syn: f64, dt: f64) -> Self {
        let syn_decay = libm::exp(-dt / tau_syn);
        let mem_decay = libm::exp(-dt / tau_mem);
        Self {
            syn_decay,
            mem_decay,
            current_gain: tau_syn / (tau_syn - tau_mem) * (syn_decay - mem_decay),
        }
    }
}

/// Nonlinearity turning the distance to threshold into a spike value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpikeFn {
    /// Hard threshold, `1` when `v_pre >= threshold`.
    Heaviside,
    /// `0.5 + x / (1 + k |x|)`: smooth stand-in whose derivative is exactly the
    /// SuperSpike surrogate of steepness `k`. Used to check gradients.
    FastSigmoid { steepness: f64 },
}

impl SpikeFn {
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            SpikeFn::Heaviside => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::FastSigmoid { steepness } => {
                if x.is_infinite() {
                    0.5 + x.signum() / steepness
                } else {
                    0.5 + x / (1.0 + steepness * x.abs())
                }
            }
        }
    }
}

/// Network weights plus neuron and grid constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnParams {
    /// `[n_hidden x n_inputs]`
    pub w_ih: Matrix,
    /// `[n_out x n_hidden]`
    pub w_ho: Matrix,
    pub hidden: NeuronParams,
    pub readout: ReadoutParams,
    pub n_steps: usize,
    pub dt: f64,
}

/// Gains on the `1/sqrt(fan_in)` standard deviation of the initial weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitGain {
    pub input: f64,
    pub output: f64,
}

impl Default for InitGain {
    fn default() -> Self {
        Self {
            input: 5.0,
            output: 1.0,
        }
    }
}

impl SnnParams {
    /// Gaussian initialization with std `gain / sqrt(fan_in)` per layer.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        n_inputs: usize,
        n_hidden: usize,
        n_out: usize,
        hidden: NeuronParams,
        readout: ReadoutParams,
        n_steps: usize,
        dt: f64,
        gain: InitGain,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_ih = Matrix::gaussian(
            n_hidden,
            n_inputs,
            gain.input / libm::sqrt(n_inputs as f64),
            &mut rng,
        );
        let w_ho = Matrix::gaussian(
            n_out,
            n_hidden,
            gain.output / libm::sqrt(n_hidden as f64),
            &mut rng,
        );
        let p = Self {
            w_ih,
            w_ho,
            hidden,
            readout,
            n_steps,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_inputs(&self) -> usize {
        self.w_ih.cols
    }

    pub fn n_hidden(&self) -> usize {
        self.w_ih.rows
    }

    pub fn n_out(&self) -> usize {
        self.w_ho.rows
    }

    pub fn validate(&self) -> Result<()> {
        self.hidden.validate()?;
        self.readout.validate()?;
        ensure_len("w_ho columns", self.w_ih.rows, self.w_ho.cols)?;
        ensure_len("w_ih data", self.w_ih.rows * self.w_ih.cols, self.w_ih.data.len())?;
        ensure_len("w_ho data", self.w_ho.rows * self.w_ho.cols, self.w_ho.data.len())?;
        if self.n_steps == 0 || !(self.dt > 0.0) {
            return Err(config("n_steps and dt must be positive"));
        }
        Ok(())
    }
}

/// Membrane and current state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
}

impl LayerState {
    pub fn at_rest(n: usize, v_leak: f64) -> Self {
        Self {
            v: vec![v_leak; n],
            i: vec![0.0; n],
        }
    }
}

/// Presynaptic activity feeding a layer in one step.
#[derive(Debug, Clone, Copy)]
pub enum SpikeRow<'a> {
    /// Indices of presynaptic neurons emitting a unit spike.
    Sparse(&'a [usize]),
    /// Spike value of every presynaptic neuron.
    Dense(&'a [f64]),
}

/// Hidden-layer cell constants resolved for a fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct LifCell {
    pub params: NeuronParams,
    pub prop: Propagator,
    pub spike_fn: SpikeFn,
}

impl LifCell {
    pub fn new(params: NeuronParams, dt: f64, spike_fn: SpikeFn) -> Self {
        Self {
            params,
            prop: Propagator::new(params.tau_mem, params.tau_syn, dt),
            spike_fn,
        }
    }
}

/// Readout cell constants resolved for a fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct LiCell {
    pub params: ReadoutParams,
    pub prop: Propagator,
}

impl LiCell {
    pub fn new(params: ReadoutParams, dt: f64) -> Self {
        Self {
            params,
            prop: Propagator::new(params.tau_mem, params.tau_syn, dt),
        }
    }
}

#[inline]
fn integrate(state: &mut LayerState, input: SpikeRow<'_>, w: &Matrix, v_leak: f64, prop: &Propagator) {
    for (v, &i) in state.v.iter_mut().zip(&state.i) {
        *v = v_leak + prop.mem_decay * (*v - v_leak) + prop.current_gain * i;
    }
    state.i.iter_mut().for_each(|i| *i *= prop.syn_decay);
    match input {
        SpikeRow::Sparse(active) => {
            for &src in active {
                for (j, i) in state.i.iter_mut().enumerate() {
                    *i += w.data[j * w.cols + src];
                }
            }
        }
        SpikeRow::Dense(values) => {
            for (src, &s) in values.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (j, i) in state.i.iter_mut().enumerate() {
                    *i += w.data[j * w.cols + src] * s;
                }
            }
        }
    }
}

fn check_finite(what: &'static str, step: usize, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite { what, step, index }),
    }
}

/// Advances the spiking layer by one step.
///
/// On return `v_pre` holds the membrane before threshold and reset,
/// `spikes` the spike values and `state.v` the membrane after reset.
pub fn lif_step(
    state: &mut LayerState,
    input: SpikeRow<'_>,
    w: &Matrix,
    cell: &LifCell,
    v_pre: &mut [f64],
    spikes: &mut [f64],
    step: usize,
) -> Result<()> {
    let p = &cell.params;
    integrate(state, input, w, p.v_leak, &cell.prop);
    check_finite("hidden membrane", step, &state.v)?;
    check_finite("hidden current", step, &state.i)?;
    v_pre.copy_from_slice(&state.v);
    for ((v, z), &pre) in state.v.iter_mut().zip(spikes.iter_mut()).zip(v_pre.iter()) {
        *z = cell.spike_fn.value(pre - p.threshold);
        match cell.spike_fn {
            SpikeFn::Heaviside => {
                if *z != 0.0 {
                    *v = p.v_reset;
                }
            }
            SpikeFn::FastSigmoid { .. } => *v = pre * (1.0 - *z) + p.v_reset * *z,
        }
    }
    Ok(())
}

/// Advances the readout layer by one step.
pub fn li_step(
    state: &mut LayerState,
    input: SpikeRow<'_>,
    w: &Matrix,
    cell: &LiCell,
    step: usize,
) -> Result<()> {
    integrate(state, input, w, cell.params.v_leak, &cell.prop);
    check_finite("readout membrane", step, &state.v)?;
    check_finite("readout current", step, &state.i)
}

/// Full state history of one forward pass, each array `[n_steps x width]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnnTrace {
    pub n_steps: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub i_h: Vec<f64>,
    /// Hidden membrane before threshold and reset.
    pub v_h_pre: Vec<f64>,
    /// Hidden membrane after reset.
    pub v_h: Vec<f64>,
    pub spikes: Vec<f64>,
    pub i_o: Vec<f64>,
    pub v_o: Vec<f64>,
}

impl SnnTrace {
    fn reset(&mut self, n_steps: usize, n_hidden: usize, n_out: usize) {
        self.n_steps = n_steps;
        self.n_hidden = n_hidden;
        self.n_out = n_out;
        for (buf, width) in [
            (&mut self.i_h, n_hidden),
            (&mut self.v_h_pre, n_hidden),
            (&mut self.v_h, n_hidden),
            (&mut self.spikes, n_hidden),
            (&mut self.i_o, n_out),
            (&mut self.v_o, n_out),
        ] {
            buf.clear();
            buf.resize(n_steps * width, 0.0);
        }
    }

    /// Readout membrane of neuron `k` at step `n`.
    pub fn readout(&self, n: usize, k: usize) -> f64 {
        self.v_o[n * self.n_out + k]
    }

    /// `(max over time, first step attaining it)` per readout neuron.
    pub fn readout_peaks(&self) -> Vec<(f64, usize)> {
        (0..self.n_out)
            .map(|k| {
                let mut best = (f64::NEG_INFINITY, 0);
                for n in 0..self.n_steps {
                    let v = self.readout(n, k);
                    if v > best.0 {
                        best = (v, n);
                    }
                }
                best
            })
            .collect()
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().filter(|&&z| z != 0.0).count()
    }
}

/// Buckets raster events by step. Returns the input indices sorted by step and
/// the offsets delimiting each step.
pub(crate) fn bucket_events(raster: &SpikeRaster, n_steps: usize) -> (Vec<usize>, Vec<usize>) {
    let mut counts = vec![0usize; n_steps + 1];
    for (step, _) in raster.events() {
        if (step as usize) < n_steps {
            counts[step as usize + 1] += 1;
        }
    }
    for n in 0..n_steps {
        counts[n + 1] += counts[n];
    }
    let mut fill = counts.clone();
    let mut order = vec![0usize; counts[n_steps]];
    for (step, src) in raster.events() {
        let s = step as usize;
        if s < n_steps {
            order[fill[s]] = src;
            fill[s] += 1;
        }
    }
    (order, counts)
}

/// Runs the network on `raster` with hard-threshold spiking.
pub fn forward(raster: &SpikeRaster, params: &SnnParams) -> Result<SnnTrace> {
    let mut trace = SnnTrace::default();
    forward_into(raster, params, SpikeFn::Heaviside, &mut trace)?;
    Ok(trace)
}

/// Runs the network, reusing the buffers of `trace`.
///
/// Spikes scheduled at or after `n_steps` are ignored.
pub fn forward_into(
    raster: &SpikeRaster,
    params: &SnnParams,
    spike_fn: SpikeFn,
    trace: &mut SnnTrace,
) -> Result<()> {
    ensure_len("raster inputs", params.n_inputs(), raster.n_inputs())?;
    let (nh, no, steps) = (params.n_hidden(), params.n_out(), params.n_steps);
    trace.reset(steps, nh, no);
    let lif = LifCell::new(params.hidden, params.dt, spike_fn);
    let li = LiCell::new(params.readout, params.dt);
    let mut hidden = LayerState::at_rest(nh, params.hidden.v_leak);
    let mut out = LayerState::at_rest(no, params.readout.v_leak);
    let (order, offsets) = bucket_events(raster, steps);
    for n in 0..steps {
        let active = &order[offsets[n]..offsets[n + 1]];
        let hs = n * nh..(n + 1) * nh;
        lif_step(
            &mut hidden,
            SpikeRow::Sparse(active),
            &params.w_ih,
            &lif,
            &mut trace.v_h_pre[hs.clone()],
            &mut trace.spikes[hs.clone()],
            n,
        )?;
        trace.i_h[hs.clone()].copy_from_slice(&hidden.i);
        trace.v_h[hs.clone()].copy_from_slice(&hidden.v);
        li_step(
            &mut out,
            SpikeRow::Dense(&trace.spikes[hs]),
            &params.w_ho,
            &li,
            n,
        )?;
        let os = n * no..(n + 1) * no;
        trace.i_o[os.clone()].copy_from_slice(&out.i);
        trace.v_o[os].copy_from_slice(&out.v);
    }
    Ok(())
}

/// Class with the largest peak readout membrane. Ties go to the smallest index.
pub fn decide(trace: &SnnTrace) -> (Class, BitPair) {
    let peaks = trace.readout_peaks();
    let mut best = 0;
    for (k, p) in peaks.iter().enumerate() {
        if p.0 > peaks[best].0 {
            best = k;
        }
    }
    let class = Class::new(best).expect("four readout neurons");
    (class, class.bits())
}
