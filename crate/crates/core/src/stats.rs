//! Bit error counting and binomial confidence intervals.

use crate::error::{Error, Result};
use crate::pam4::Class;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Bit errors of decided classes against the transmitted ones.
pub fn count_bit_errors(decided: &[Class], truth: &[Class]) -> u64 {
    decided
        .iter()
        .zip(truth)
        .map(|(d, t)| d.bit_errors(*t) as u64)
        .sum()
}

/// Wilson score interval for `errors` out of `bits` at confidence `z`.
pub fn wilson_interval(errors: u64, bits: u64, z: f64) -> Result<(f64, f64)> {
    if bits == 0 {
        return Err(Error::Empty("no bits counted"));
    }
    if errors > bits {
        return Err(Error::Degenerate("more errors than bits".into()));
    }
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == bits { 1.0 } else { (center + half).min(1.0) };
    Ok((lo.min(p), hi.max(p)))
}

/// 95% Wilson interval of a measured bit error rate.
pub fn ber_confidence(errors: u64, bits: u64) -> Result<(f64, f64)> {
    wilson_interval(errors, bits, Z95)
}
