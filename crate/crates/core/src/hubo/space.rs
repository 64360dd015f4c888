use serde::{Deserialize, Serialize};

use super::{Assignment, VarKind, VarRegistry};
use crate::error::{Error, Result};

/// Initial-state preparation, which fixes the set of reachable assignments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    /// Hadamard on every key qubit.
    HadamardFull,
    /// Hadamard on bit qubits and a W state on each delay block.
    #[default]
    WStateReduced,
}

/// Indexable set of assignments reachable from a preparation.
///
/// Index `i` is a mixed-radix number whose digit for UT `m` selects one of
/// that UT's local patterns; UT 0 is the least significant digit.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    n_vars: usize,
    /// Per-UT list of local bit masks over the registry.
    patterns: Vec<Vec<u64>>,
    len: u128,
}

/// Largest space that can be enumerated into an index.
pub const MAX_SPACE: u128 = 1 << 40;

impl SearchSpace {
    pub fn new(reg: &VarRegistry, prep: Preparation) -> Result<Self> {
        let n_vars = reg.len();
        let full = prep == Preparation::HadamardFull || reg.modulation().is_none();
        let mut patterns = Vec::with_capacity(reg.n_users());
        for m in 0..reg.n_users() {
            let free: Vec<usize> =
                reg.user_vars(m).into_iter().filter(|&i| full || reg.vars()[i].kind != VarKind::Delay).collect();
            let delays = if full { Vec::new() } else { reg.indices_of_kind(VarKind::Delay, m) };
            let mut local = Vec::new();
            let hot: Vec<Option<usize>> =
                if delays.is_empty() { vec![None] } else { delays.iter().copied().map(Some).collect() };
            for d in hot {
                for bits in 0u64..(1 << free.len()) {
                    let mut mask = d.map_or(0, |i| 1u64 << i);
                    for (j, &i) in free.iter().enumerate() {
                        mask |= (bits >> j & 1) << i;
                    }
                    local.push(mask);
                }
            }
            local.sort_unstable();
            patterns.push(local);
        }
        let len = patterns.iter().try_fold(1u128, |acc, p| acc.checked_mul(p.len() as u128));
        let len =
            len.filter(|&l| l <= MAX_SPACE).ok_or_else(|| Error::Capacity("search space too large to index".into()))?;
        Ok(Self { n_vars, patterns, len })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> u128 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, mut i: u128) -> Assignment {
        debug_assert!(i < self.len);
        let mut mask = 0;
        for p in &self.patterns {
            let n = p.len() as u128;
            mask |= p[(i % n) as usize];
            i /= n;
        }
        Assignment(mask)
    }

    pub fn index_of(&self, x: Assignment) -> Option<u128> {
        let mut idx = 0u128;
        let mut scale = 1u128;
        let mut covered = 0u64;
        for p in &self.patterns {
            let owned = p.iter().fold(0, |a, &m| a | m);
            let digit = p.binary_search(&(x.0 & owned)).ok()?;
            idx += digit as u128 * scale;
            scale *= p.len() as u128;
            covered |= owned;
        }
        (x.0 & !covered == 0).then_some(idx)
    }

    pub fn contains(&self, x: Assignment) -> bool {
        self.index_of(x).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = Assignment> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }
}

/// All assignments reachable from `prep`.
pub fn enumerate_search_space(reg: &VarRegistry, prep: Preparation) -> Result<impl Iterator<Item = Assignment>> {
    let space = SearchSpace::new(reg, prep)?;
    Ok((0..space.len).map(move |i| space.get(i)))
}
