//! Sliding tap windows over a symbol-rate stream with edge replication.

/// Fills `out` with the `out.len()` samples centered on `center`, replicating
/// the first/last sample of `stream` where the window runs off either edge.
///
/// `out.len()` is the tap count and should be odd.
pub fn fill_window<T: Copy>(stream: &[T], center: usize, out: &mut [T]) {
    debug_assert!(!stream.is_empty());
    let half = out.len() / 2;
    let last = stream.len() - 1;
    for (r, slot) in out.iter_mut().enumerate() {
        let idx = (center + r).saturating_sub(half).min(last);
        *slot = stream[idx];
    }
}
