//! Link simulation, dataset and checkpoint files, and BER sweeps for the
//! equalizers of `spikeq-core`.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod equalizer;
pub mod error;
pub mod files;
pub mod histogram;
pub mod link;
pub mod sweep;

pub use error::{Error, Result};
