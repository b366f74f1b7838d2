//! Decision thresholds minimizing the empirical bit error rate.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pam4::Class;

/// Class of `z` under increasing thresholds: the number of thresholds below it.
#[inline]
pub fn slice(z: f64, boundaries: &[f64; 3]) -> Class {
    let k = boundaries.iter().filter(|&&b| z > b).count();
    Class::new(k).expect("at most three thresholds")
}

/// Bit errors of slicing every `z` with `boundaries`.
pub fn bit_errors(z: &[f64], labels: &[Class], boundaries: &[f64; 3]) -> u64 {
    z.iter()
        .zip(labels)
        .map(|(&v, &l)| slice(v, boundaries).bit_errors(l) as u64)
        .sum()
}

/// Midpoints between consecutive class means (sorted).
pub fn midpoint_boundaries(z: &[f64], labels: &[Class]) -> Result<[f64; 3]> {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for (&v, l) in z.iter().zip(labels) {
        sum[l.index()] += v;
        count[l.index()] += 1;
    }
    if let Some(k) = count.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(alloc::format!("class {k} has no samples")));
    }
    let mut means = [0.0; 4];
    for k in 0..4 {
        means[k] = sum[k] / count[k] as f64;
    }
    let mut b = [
        0.5 * (means[0] + means[1]),
        0.5 * (means[1] + means[2]),
        0.5 * (means[2] + means[3]),
    ];
    b.sort_by(f64::total_cmp);
    Ok(b)
}

/// BER-optimal thresholds: coordinate descent from the midpoint thresholds,
/// each coordinate set by an exhaustive scan over sample midpoints.
pub fn optimize_boundaries(z: &[f64], labels: &[Class]) -> Result<[f64; 3]> {
    if z.len() != labels.len() {
        return Err(Error::Shape {
            what: "boundary labels",
            expected: z.len(),
            actual: labels.len(),
        });
    }
    let init = midpoint_boundaries(z, labels)?;
    Ok(refine_boundaries(z, labels, init))
}

/// Coordinate descent from `init`. A threshold only moves when that strictly
/// lowers the bit error count, so the result never does worse than `init` and
/// is a fixed point of this function.
pub fn refine_boundaries(z: &[f64], labels: &[Class], init: [f64; 3]) -> [f64; 3] {
    let mut pairs: Vec<(f64, Class)> = z.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut b = init;
    for _ in 0..100 {
        let mut moved = false;
        for i in 0..3 {
            if let Some(c) = best_threshold(&pairs, &b, i) {
                b[i] = c;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    b
}

/// Scans threshold `i` between its neighbours; returns a strictly better
/// position if one exists.
fn best_threshold(sorted: &[(f64, Class)], b: &[f64; 3], i: usize) -> Option<f64> {
    let lo = if i == 0 { f64::NEG_INFINITY } else { b[i - 1] };
    let hi = if i == 2 { f64::INFINITY } else { b[i + 1] };
    // Samples strictly above `lo` and at most `hi` change between class i and i + 1.
    let start = sorted.partition_point(|p| p.0 <= lo);
    let end = sorted.partition_point(|p| p.0 <= hi);
    let seg = &sorted[start..end];
    if seg.is_empty() {
        return None;
    }
    let (lower, upper) = (Class::new(i).unwrap(), Class::new(i + 1).unwrap());
    let cost_up: Vec<u32> = seg.iter().map(|p| upper.bit_errors(p.1)).collect();
    let cost_low: Vec<u32> = seg.iter().map(|p| lower.bit_errors(p.1)).collect();

    // Threshold below seg[k] (k samples on the lower side).
    let mut cost: u64 = cost_up.iter().map(|&c| c as u64).sum();
    let current_k = seg.partition_point(|p| p.0 <= b[i]);
    let mut current = None;
    let mut best: Option<(u64, usize)> = None;
    for k in 0..=seg.len() {
        if k > 0 {
            cost = cost - cost_up[k - 1] as u64 + cost_low[k - 1] as u64;
        }
        // A threshold can only sit between distinct values.
        let valid = if k == seg.len() {
            k == 0 || seg[k - 1].0 < hi
        } else {
            k == 0 || seg[k - 1].0 < seg[k].0
        };
        if k == current_k {
            current = Some(cost);
        }
        if valid && best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, k));
        }
    }
    let (best_cost, k) = best?;
    if best_cost >= current.expect("current position visited") {
        return None;
    }
    let below = if k == 0 { lo } else { seg[k - 1].0 };
    let above = if k == seg.len() { hi } else { seg[k].0 };
    Some(match (below.is_finite(), above.is_finite()) {
        (true, true) => 0.5 * (below + above),
        (false, true) => above - 1.0,
        (true, false) => below + 1.0,
        (false, false) => 0.0,
    })
}
