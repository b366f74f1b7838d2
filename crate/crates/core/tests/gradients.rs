//! Backward pass checked against central finite differences of the forward pass.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeq_core::encoder::SpikeRaster;
use spikeq_core::pam4::Class;
use spikeq_core::snn::{forward_into, InitGain, NeuronParams, ReadoutParams, SnnParams, SnnTrace, SpikeFn};
use spikeq_core::train::bptt::{backward, loss, BackwardConfig, GradientTape};

const STEPS: usize = 30;

fn random_raster(seed: u64, taps: usize, per: usize) -> SpikeRaster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpikeRaster {
        n_tap: taps,
        neurons_per_sample: per,
        steps: (0..taps * per)
            .map(|_| rng.random_bool(0.7).then(|| rng.random_range(0..20)))
            .collect(),
    }
}

fn network(threshold: f64, seed: u64) -> SnnParams {
    network_with_gain(threshold, seed, 6.0)
}

fn network_with_gain(threshold: f64, seed: u64, input_gain: f64) -> SnnParams {
    SnnParams::init(
        20,
        8,
        4,
        NeuronParams {
            threshold,
            ..NeuronParams::default()
        },
        ReadoutParams::default(),
        STEPS,
        1.0,
        InitGain {
            input: input_gain,
            output: 1.5,
        },
        seed,
    )
    .unwrap()
}

fn loss_at(raster: &SpikeRaster, params: &SnnParams, f: SpikeFn, label: Class) -> f64 {
    let mut trace = SnnTrace::default();
    forward_into(raster, params, f, &mut trace).unwrap();
    loss(&trace, label).unwrap()
}

/// Central differences over every entry of `w_ih` (when `ih`) and `w_ho`.
fn finite_differences(
    raster: &SpikeRaster,
    params: &SnnParams,
    f: SpikeFn,
    label: Class,
    ih: bool,
) -> (Vec<f64>, Vec<f64>) {
    let h = 1e-6;
    let mut p = params.clone();
    let mut d_ih = vec![0.0; p.w_ih.data.len()];
    if ih {
        for i in 0..d_ih.len() {
            let w0 = p.w_ih.data[i];
            p.w_ih.data[i] = w0 + h;
            let up = loss_at(raster, &p, f, label);
            p.w_ih.data[i] = w0 - h;
            let down = loss_at(raster, &p, f, label);
            p.w_ih.data[i] = w0;
            d_ih[i] = (up - down) / (2.0 * h);
        }
    }
    let mut d_ho = vec![0.0; p.w_ho.data.len()];
    for i in 0..d_ho.len() {
        let w0 = p.w_ho.data[i];
        p.w_ho.data[i] = w0 + h;
        let up = loss_at(raster, &p, f, label);
        p.w_ho.data[i] = w0 - h;
        let down = loss_at(raster, &p, f, label);
        p.w_ho.data[i] = w0;
        d_ho[i] = (up - down) / (2.0 * h);
    }
    (d_ih, d_ho)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[test]
fn readout_gradient_matches_differences_with_frozen_spikes() {
    for seed in 0..5 {
        let raster = random_raster(seed, 2, 10);
        let params = network_with_gain(1.0, 100 + seed, 12.0);
        let label = Class::new(seed as usize % 4).unwrap();
        let tape = GradientTape::record(raster.clone(), &params, SpikeFn::Heaviside).unwrap();
        assert!(tape.trace.spike_count() > 0, "seed {seed} produced no hidden spikes");
        let (_, g) = backward(&tape, &params, label, &BackwardConfig::default()).unwrap();
        let (_, fd_ho) = finite_differences(&raster, &params, SpikeFn::Heaviside, label, false);
        let e = rel_err(&g.w_ho.data, &fd_ho);
        assert!(e < 1e-6, "seed {seed}: w_ho relative error {e:e}");
    }
}

#[test]
fn silent_network_has_zero_gradients_on_both_routes() {
    let raster = random_raster(3, 2, 10);
    let params = network(f64::INFINITY, 9);
    let label = Class::new(1).unwrap();
    let tape = GradientTape::record(raster.clone(), &params, SpikeFn::Heaviside).unwrap();
    assert_eq!(tape.trace.spike_count(), 0);
    let (l, g) = backward(&tape, &params, label, &BackwardConfig::default()).unwrap();
    assert!((l - 4f64.ln()).abs() < 1e-15);
    let (fd_ih, fd_ho) = finite_differences(&raster, &params, SpikeFn::Heaviside, label, true);
    assert!(rel_err(&g.w_ih.data, &fd_ih) < 1e-6);
    assert!(rel_err(&g.w_ho.data, &fd_ho) < 1e-6);
}

#[test]
fn smoothed_forward_gradient_matches_differences() {
    let cfg = BackwardConfig {
        surrogate_steepness: 10.0,
        detach_reset: false,
    };
    let f = SpikeFn::FastSigmoid { steepness: 10.0 };
    for seed in 0..4 {
        let raster = random_raster(20 + seed, 2, 10);
        let params = network(1.0, 200 + seed);
        let label = Class::new((seed as usize + 1) % 4).unwrap();
        let tape = GradientTape::record(raster.clone(), &params, f).unwrap();
        let (_, g) = backward(&tape, &params, label, &cfg).unwrap();
        let (fd_ih, fd_ho) = finite_differences(&raster, &params, f, label, true);
        let e_ih = rel_err(&g.w_ih.data, &fd_ih);
        let e_ho = rel_err(&g.w_ho.data, &fd_ho);
        assert!(e_ih < 1e-6 && e_ho < 1e-6, "seed {seed}: {e_ih:e} {e_ho:e}");
        assert!(g.w_ih.max_abs() > 1e-6, "w_ih gradient should be exercised");
    }
}

#[test]
fn zero_input_weights_give_label_patterned_readout_rows() {
    // Hidden layer silent and identical, readout rows equal: every class sees
    // the same peak, so rows differ only through softmax - onehot.
    let raster = random_raster(5, 2, 10);
    let mut params = network(1.0, 3);
    params.w_ih.data.iter_mut().for_each(|w| *w = 0.0);
    params.w_ho.data.iter_mut().for_each(|w| *w = 0.1);
    let f = SpikeFn::FastSigmoid { steepness: 10.0 };
    let label = Class::new(2).unwrap();
    let tape = GradientTape::record(raster, &params, f).unwrap();
    let (_, g) = backward(&tape, &params, label, &BackwardConfig::default()).unwrap();
    let rows: Vec<&[f64]> = (0..4).map(|k| g.w_ho.row(k)).collect();
    assert!(rows[0].iter().any(|v| *v != 0.0));
    for k in [1, 3] {
        assert_eq!(rows[k], rows[0]);
    }
    for (a, b) in rows[2].iter().zip(rows[0]) {
        assert!((a + 3.0 * b).abs() < 1e-15);
    }
}

#[test]
fn tape_replay_reproduces_trace() {
    let raster = random_raster(11, 2, 10);
    let params = network(1.0, 4);
    let tape = GradientTape::record(raster, &params, SpikeFn::Heaviside).unwrap();
    assert_eq!(tape.replay(&params).unwrap(), tape.trace);
}

#[test]
fn backward_is_deterministic() {
    let raster = random_raster(12, 2, 10);
    let params = network(1.0, 5);
    let tape = GradientTape::record(raster, &params, SpikeFn::Heaviside).unwrap();
    let c = Class::new(0).unwrap();
    let a = backward(&tape, &params, c, &BackwardConfig::default()).unwrap();
    let b = backward(&tape, &params, c, &BackwardConfig::default()).unwrap();
    assert_eq!(a, b);
}
