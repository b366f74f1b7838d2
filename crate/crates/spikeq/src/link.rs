//! Simulated IM/DD link: PAM4 mapping, RRC shaping, bias, chromatic
//! dispersion, square-law detection, AWGN and matched filtering.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use spikeq_core::pam4::{map_pam4, BitPair, Class, SymbolFrame};
use spikeq_core::pulse::{convolve, downsample, pam4_peak_bound, photodiode, rrc_taps, upsample};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Symbols per second.
    pub baud_rate: f64,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
    /// Dispersion coefficient in ps/(nm km).
    pub dispersion_ps_nm_km: f64,
    /// Fiber length in metres.
    pub fiber_length: f64,
    /// Samples per symbol.
    pub oversampling: usize,
    pub rrc_rolloff: f64,
    /// Filter span in symbols.
    pub rrc_span: usize,
    /// Added to the shaped field after scaling it into `[-1, 1]`.
    pub bias: f64,
    /// AWGN variance after the photodiode.
    pub noise_sigma2: f64,
    /// Random symbols simulated and discarded on each side of a frame.
    pub guard_symbols: usize,
    pub rng_seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            baud_rate: 100e9,
            wavelength: 1270e-9,
            dispersion_ps_nm_km: -5.0,
            fiber_length: 5e3,
            oversampling: 2,
            rrc_rolloff: 0.2,
            rrc_span: 16,
            bias: 1.0,
            noise_sigma2: 0.0,
            guard_symbols: 16,
            rng_seed: 0,
        }
    }
}

impl LinkConfig {
    /// Dispersion in s/m^2: 1 ps/(nm km) = 1e-12 s / (1e-9 m * 1e3 m) = 1e-6 s/m^2.
    pub fn dispersion_si(&self) -> f64 {
        self.dispersion_ps_nm_km * 1e-6
    }

    pub fn sample_rate(&self) -> f64 {
        self.baud_rate * self.oversampling as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.oversampling < 2 {
            return bad("oversampling must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.rrc_rolloff) {
            return bad("rrc_rolloff must lie in [0, 1]");
        }
        if !(self.noise_sigma2 >= 0.0 && self.noise_sigma2.is_finite()) {
            return bad("noise_sigma2 must be finite and nonnegative");
        }
        if !(self.fiber_length >= 0.0) {
            return bad("fiber_length must be nonnegative");
        }
        if !(self.baud_rate > 0.0 && self.wavelength > 0.0) {
            return bad("baud_rate and wavelength must be positive");
        }
        if self.rrc_span == 0 {
            return bad("rrc_span must be positive");
        }
        if !self.bias.is_finite() || !self.dispersion_ps_nm_km.is_finite() {
            return bad("bias and dispersion must be finite");
        }
        Ok(())
    }
}

/// Sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformBuffer<T> {
    pub samples: Vec<T>,
    /// Samples per second.
    pub sample_rate: f64,
}

impl<T> WaveformBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: f64) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl WaveformBuffer<f64> {
    pub fn to_complex(&self) -> WaveformBuffer<Complex64> {
        WaveformBuffer::new(
            self.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            self.sample_rate,
        )
    }
}

/// Frequency of FFT bin `k` out of `n` at sample rate `fs`, in `[-fs/2, fs/2)`.
fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    k * fs / n as f64
}

/// Applies fiber dispersion as the all-pass filter
/// `H(f) = exp(-j pi lambda^2 D L f^2 / c)` on the FFT grid of the buffer
/// (circular).
pub fn apply_cd(wave: &WaveformBuffer<Complex64>, cfg: &LinkConfig) -> Result<WaveformBuffer<Complex64>> {
    let n = wave.len();
    if n == 0 {
        return Err(spikeq_core::Error::Empty("dispersion input").into());
    }
    let coeff = -std::f64::consts::PI * cfg.wavelength * cfg.wavelength * cfg.dispersion_si() * cfg.fiber_length
        / SPEED_OF_LIGHT;
    if coeff == 0.0 {
        return Ok(wave.clone());
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = wave.samples.clone();
    fwd.process(&mut buf);
    let norm = 1.0 / n as f64;
    for (k, x) in buf.iter_mut().enumerate() {
        let f = bin_frequency(k, n, wave.sample_rate);
        *x *= Complex64::from_polar(norm, coeff * f * f);
    }
    inv.process(&mut buf);
    Ok(WaveformBuffer::new(buf, wave.sample_rate))
}

/// Adds iid `N(0, sigma2)` samples drawn from `rng`.
pub fn add_awgn<R: Rng + ?Sized>(wave: &WaveformBuffer<f64>, sigma2: f64, rng: &mut R) -> Result<WaveformBuffer<f64>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Config(format!("noise variance {sigma2} must be finite and nonnegative")));
    }
    if sigma2 == 0.0 {
        return Ok(wave.clone());
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("positive finite deviation");
    let samples = wave.samples.iter().map(|&x| x + normal.sample(rng)).collect();
    Ok(WaveformBuffer::new(samples, wave.sample_rate))
}

/// Received samples aligned with their transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutput {
    pub frame: SymbolFrame,
    /// One decision sample per symbol.
    pub y: Vec<f64>,
    /// Variance of the photodiode output before noise, over the whole
    /// simulated frame including guards.
    pub signal_variance: f64,
}

/// Independent random streams of one simulation.
fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut guards = ChaCha8Rng::seed_from_u64(seed);
    guards.set_stream(1);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2);
    (guards, noise)
}

/// Uniform random bit pairs.
pub fn random_bits(n: usize, seed: u64) -> Vec<BitPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Class::new(rng.random_range(0..4)).expect("class index").bits())
        .collect()
}

/// Runs the full link for `bits`. Random guard symbols are simulated on
/// both sides and dropped; the combined delay of both RRC filters is
/// removed so `y[t]` is the decision sample of symbol `t`.
pub fn simulate_link(bits: &[BitPair], cfg: &LinkConfig) -> Result<LinkOutput> {
    cfg.validate()?;
    if bits.is_empty() {
        return Err(spikeq_core::Error::Empty("bit sequence").into());
    }
    let (mut guard_rng, mut noise_rng) = streams(cfg.rng_seed);
    let g = cfg.guard_symbols;
    let guard = |rng: &mut ChaCha8Rng| -> Vec<BitPair> {
        (0..g)
            .map(|_| Class::new(rng.random_range(0..4)).expect("class index").bits())
            .collect()
    };
    let mut all = guard(&mut guard_rng);
    all.extend_from_slice(bits);
    all.extend(guard(&mut guard_rng));
    let amps = map_pam4(&all).amplitudes;

    let os = cfg.oversampling;
    let h = rrc_taps(cfg.rrc_rolloff, cfg.rrc_span, os)?;
    let scale = 1.0 / pam4_peak_bound(&h, os);
    let field: Vec<Complex64> = convolve(&upsample(&amps, os), &h)
        .into_iter()
        .map(|x| Complex64::new(x * scale + cfg.bias, 0.0))
        .collect();
    let field = apply_cd(&WaveformBuffer::new(field, cfg.sample_rate()), cfg)?;
    let power = WaveformBuffer::new(photodiode(&field.samples), field.sample_rate);
    let signal_variance = variance(&power.samples);
    let noisy = add_awgn(&power, cfg.noise_sigma2, &mut noise_rng)?;
    let filtered = convolve(&noisy.samples, &h);
    let y_all = downsample(&filtered, os, cfg.rrc_span * os);
    let y = y_all[g..g + bits.len()].to_vec();
    Ok(LinkOutput {
        frame: map_pam4(bits),
        y,
        signal_variance,
    })
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Converts a noise level in dB relative to `signal_variance` to an absolute variance.
pub fn sigma2_from_db(db: f64, signal_variance: f64) -> f64 {
    signal_variance * 10f64.powf(db / 10.0)
}

/// Noiseless photodiode output variance of a frame of `n` random symbols.
pub fn reference_variance(cfg: &LinkConfig, n: usize, seed: u64) -> Result<f64> {
    let quiet = LinkConfig {
        noise_sigma2: 0.0,
        rng_seed: seed,
        ..cfg.clone()
    };
    Ok(simulate_link(&random_bits(n, seed), &quiet)?.signal_variance)
}
