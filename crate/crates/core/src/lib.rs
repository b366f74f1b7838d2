//! Core numerics for equalizing and demapping PAM4 over an IM/DD link with a
//! small spiking neural network, plus the linear and ReLU reference receivers.
//!
//! The crate is `no_std` and only needs `alloc`. Waveform IO, the FFT-based
//! dispersion stage and the command line live in the `spikeq` crate.
#![no_std]
// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod baselines;
pub mod encoder;
pub mod error;
pub mod matrix;
pub mod pam4;
pub mod pulse;
pub mod receiver;
pub mod snn;
pub mod stats;
pub mod train;
pub mod window;

pub use error::{Error, Result};
