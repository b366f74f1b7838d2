//! Reference receivers: linear MMSE equalizer with BER-optimal slicing, and
//! feedforward ReLU networks.

pub mod ann;
pub mod boundaries;
pub mod lmmse;

pub use ann::{AnnArch, AnnParams, WindowSamples};
pub use boundaries::{optimize_boundaries, refine_boundaries, slice};
pub use lmmse::{fit_lmmse, LinearFilter, LmmseEqualizer, NormalEquations};
