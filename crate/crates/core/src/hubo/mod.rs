//! Binary formulation of the detection objective.
//!
//! The squared residual is expanded into a multilinear polynomial over
//! payload bits `b`, optional parity bits `c` and one-hot delay bits `d`
//! ([`build_hubo`]). [`SearchSpace`] enumerates either every bit pattern or
//! only those with one-hot delay blocks.

mod builder;
mod polynomial;
mod registry;
mod space;

pub use builder::{build_hubo, build_hubo_for_slot};
pub use polynomial::{term_counts_by_order, HuboPolynomial, Term};
pub use registry::{Decoded, VarKind, VarRegistry, Variable};
pub use space::{enumerate_search_space, Preparation, SearchSpace};

use serde::{Deserialize, Serialize};

/// Largest registry an [`Assignment`] can address.
pub const MAX_VARIABLES: usize = 64;

/// A 0/1 assignment; bit `i` is the value of registry variable `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment(pub u64);

impl Assignment {
    #[inline]
    pub fn bit(self, i: usize) -> u8 {
        ((self.0 >> i) & 1) as u8
    }

    #[inline]
    pub fn with_bit(self, i: usize, v: u8) -> Self {
        if v & 1 == 1 {
            Assignment(self.0 | (1 << i))
        } else {
            Assignment(self.0 & !(1 << i))
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        bits.iter().enumerate().fold(Assignment(0), |a, (i, &b)| a.with_bit(i, b))
    }

    pub fn to_bits(self, len: usize) -> Vec<u8> {
        (0..len).map(|i| self.bit(i)).collect()
    }

    /// Variable 0 first.
    pub fn to_bitstring(self, len: usize) -> String {
        (0..len).map(|i| if self.bit(i) == 1 { '1' } else { '0' }).collect()
    }
}
