//! Pulse shaping and sample-rate plumbing for the link chain.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};
use num_complex::Complex64;

use crate::error::{config, Result};

/// Root-raised-cosine taps spanning `span_symbols` symbols at `oversampling`
/// samples per symbol, normalized to unit energy.
///
/// The tap count is `span_symbols * oversampling + 1` and must be odd so the
/// filter has a center tap.
pub fn rrc_taps(rolloff: f64, span_symbols: usize, oversampling: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(config("rrc rolloff must lie in [0, 1]"));
    }
    if oversampling == 0 || span_symbols == 0 {
        return Err(config("rrc span and oversampling must be positive"));
    }
    let n = span_symbols * oversampling;
    if !n.is_multiple_of(2) {
        return Err(config("span_symbols * oversampling must be even"));
    }
    let half = (n / 2) as isize;
    let mut taps: Vec<f64> = (0..=n as isize)
        .map(|i| rrc_value((i - half) as f64 / oversampling as f64, rolloff))
        .collect();
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let norm = libm::sqrt(energy);
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(taps)
}

/// Unnormalized RRC impulse response at `t` symbol periods from the center.
fn rrc_value(t: f64, beta: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if t.abs() < EPS {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < EPS {
        let arg = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2
            * ((1.0 + 2.0 / PI) * libm::sin(arg) + (1.0 - 2.0 / PI) * libm::cos(arg));
    }
    let num = libm::sin(PI * t * (1.0 - beta)) + 4.0 * beta * t * libm::cos(PI * t * (1.0 + beta));
    let den = PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    num / den
}

/// Largest output magnitude a PAM4 stream (levels within ±3) can produce
/// through `taps` at any polyphase offset.
pub fn pam4_peak_bound(taps: &[f64], oversampling: usize) -> f64 {
    (0..oversampling.max(1))
        .map(|phase| {
            3.0 * taps
                .iter()
                .skip(phase)
                .step_by(oversampling.max(1))
                .map(|h| h.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Zero-stuffs `x` to `factor` samples per input sample.
pub fn upsample(x: &[f64], factor: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() * factor];
    for (i, &v) in x.iter().enumerate() {
        out[i * factor] = v;
    }
    out
}

/// Keeps every `factor`-th sample starting at `offset`.
pub fn downsample(x: &[f64], factor: usize, offset: usize) -> Vec<f64> {
    x.iter().skip(offset).step_by(factor.max(1)).copied().collect()
}

/// Full linear convolution, output length `x.len() + taps.len() - 1`.
pub fn convolve(x: &[f64], taps: &[f64]) -> Vec<f64> {
    if x.is_empty() || taps.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; x.len() + taps.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &h) in out[i..].iter_mut().zip(taps) {
            *o += xv * h;
        }
    }
    out
}

/// Square-law detection: `|x|^2` per sample.
pub fn photodiode(field: &[Complex64]) -> Vec<f64> {
    field.iter().map(|z| z.norm_sqr()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_symmetric_and_unit_energy() {
        for &beta in &[0.0, 0.2, 0.25, 0.5, 1.0] {
            let h = rrc_taps(beta, 16, 2).unwrap();
            assert_eq!(h.len(), 33);
            let rev: Vec<f64> = h.iter().rev().copied().collect();
            assert_eq!(h, rev);
            let e: f64 = h.iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            assert!(h.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn singular_points_use_analytic_limit() {
        // beta = 0.25 puts t = +-1 exactly on the 1/(4 beta) singularity.
        let h = rrc_taps(0.25, 8, 4).unwrap();
        let center = h.len() / 2;
        let at_sing = h[center + 4];
        let left = h[center + 3];
        let right = h[center + 5];
        assert!(at_sing.is_finite());
        assert!(at_sing < left.max(right) + 0.1 && at_sing > left.min(right) - 0.1);
        let near = rrc_value(1.0 + 1e-7, 0.25);
        assert!((near - rrc_value(1.0, 0.25)).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_rolloff_and_odd_length() {
        assert!(rrc_taps(-0.1, 16, 2).is_err());
        assert!(rrc_taps(1.5, 16, 2).is_err());
        assert!(rrc_taps(0.2, 3, 3).is_err());
    }

    #[test]
    fn photodiode_squares_magnitude() {
        let out = photodiode(&[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(3.0, 4.0),
        ]);
        assert_eq!(out, [4.0, 0.0, 25.0]);
    }

    #[test]
    fn photodiode_ignores_global_phase() {
        let field: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(libm::cos(i as f64), 0.3 * i as f64))
            .collect();
        let rot = Complex64::from_polar(1.0, 0.731);
        let rotated: Vec<Complex64> = field.iter().map(|z| z * rot).collect();
        for (a, b) in photodiode(&field).iter().zip(photodiode(&rotated)) {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn up_and_down_sampling() {
        assert_eq!(upsample(&[1.0, 2.0], 3), [1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(downsample(&[0.0, 1.0, 2.0, 3.0, 4.0], 2, 1), [1.0, 3.0]);
    }

    #[test]
    fn convolve_matches_hand_computation() {
        assert_eq!(convolve(&[1.0, 2.0], &[1.0, -1.0, 0.5]), [1.0, 1.0, -1.5, 1.0]);
    }
}
