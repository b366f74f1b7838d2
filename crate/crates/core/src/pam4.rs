//! PAM4 Gray mapping between bit pairs, amplitude levels and class indices.
//!
//! Class index `k` enumerates the amplitude levels in increasing order, so
//! the three views of a symbol line up as
//!
//! | class | bits | amplitude |
//! |-------|------|-----------|
//! | 0     | 00   | -3        |
//! | 1     | 01   | -1        |
//! | 2     | 11   | +1        |
//! | 3     | 10   | +3        |

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// The four PAM4 amplitude levels, indexed by class.
pub const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];

const CLASS_BITS: [BitPair; 4] = [
    BitPair::new(false, false),
    BitPair::new(false, true),
    BitPair::new(true, true),
    BitPair::new(true, false),
];

/// Two bits `(b1, b2)` carried by one PAM4 symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitPair {
    pub b1: bool,
    pub b2: bool,
}

impl BitPair {
    pub const fn new(b1: bool, b2: bool) -> Self {
        Self { b1, b2 }
    }

    /// Class index (amplitude rank) of this bit pair under the Gray map.
    pub const fn class(self) -> Class {
        match (self.b1, self.b2) {
            (false, false) => Class(0),
            (false, true) => Class(1),
            (true, true) => Class(2),
            (true, false) => Class(3),
        }
    }

    pub fn amplitude(self) -> f64 {
        self.class().amplitude()
    }

    /// Number of differing bits.
    pub const fn hamming(self, other: BitPair) -> u32 {
        (self.b1 != other.b1) as u32 + (self.b2 != other.b2) as u32
    }
}

/// Decision class in `0..4`, ordered by amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Class(u8);

impl Class {
    pub const ALL: [Class; 4] = [Class(0), Class(1), Class(2), Class(3)];

    /// Returns `None` for indices outside `0..4`.
    pub const fn new(index: usize) -> Option<Self> {
        if index < 4 {
            Some(Class(index as u8))
        } else {
            None
        }
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn bits(self) -> BitPair {
        CLASS_BITS[self.0 as usize]
    }

    pub fn amplitude(self) -> f64 {
        LEVELS[self.0 as usize]
    }

    /// Bit errors made when deciding `self` for a transmitted `truth`.
    pub const fn bit_errors(self, truth: Class) -> u32 {
        self.bits().hamming(truth.bits())
    }
}

/// Transmitted symbols: bit pairs and their amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolFrame {
    pub bits: Vec<BitPair>,
    pub amplitudes: Vec<f64>,
}

impl SymbolFrame {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = Class> + '_ {
        self.bits.iter().map(|b| b.class())
    }
}

/// Gray-maps a bit-pair sequence onto PAM4 amplitudes.
pub fn map_pam4(bits: &[BitPair]) -> SymbolFrame {
    SymbolFrame {
        bits: bits.to_vec(),
        amplitudes: bits.iter().map(|b| b.amplitude()).collect(),
    }
}

/// Splits a flat bit stream into pairs `(b[2i], b[2i+1])`. A trailing odd bit is dropped.
pub fn pair_bits(bits: &[bool]) -> Vec<BitPair> {
    bits.chunks_exact(2)
        .map(|c| BitPair::new(c[0], c[1]))
        .collect()
}
