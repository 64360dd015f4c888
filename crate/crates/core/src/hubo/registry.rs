use serde::{Deserialize, Serialize};

use super::{Assignment, MAX_VARIABLES};
use crate::channel::Modulation;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Payload bit `b`.
    Bit,
    /// pi/2-BPSK parity bit `c`.
    Parity,
    /// One-hot delay bit `d`.
    Delay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub kind: VarKind,
    /// UT index `m`.
    pub user: usize,
    /// Bit position within the UT (payload bit 0/1, or delay index `k`).
    pub sub: usize,
}

/// Variable-to-qubit map. Qubit `i` holds `vars()[i]`.
///
/// Canonical order: payload bits by UT then sub-index, then parity bits
/// (if present), then delay bits by UT then delay index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarRegistry {
    vars: Vec<Variable>,
    n_users: usize,
    tau_max: usize,
    modulation: Option<Modulation>,
}

/// Bits of an assignment split by kind, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub b: Vec<u8>,
    pub c: Vec<u8>,
    pub d: Vec<u8>,
}

impl VarRegistry {
    /// Registry of the detection problem. With `parity_vars` the parity bits
    /// become free variables; otherwise they are constants fixed by the slot.
    pub fn mimo(modulation: Modulation, n_users: usize, tau_max: usize, parity_vars: bool) -> Result<Self> {
        let bps = modulation.bits_per_symbol();
        let mut vars = Vec::new();
        for user in 0..n_users {
            vars.extend((0..bps).map(|sub| Variable { kind: VarKind::Bit, user, sub }));
        }
        if parity_vars && modulation == Modulation::Psk2 {
            vars.extend((0..n_users).map(|user| Variable { kind: VarKind::Parity, user, sub: 0 }));
        }
        for user in 0..n_users {
            vars.extend((0..=tau_max).map(|sub| Variable { kind: VarKind::Delay, user, sub }));
        }
        if vars.len() > MAX_VARIABLES {
            return Err(Error::Capacity(format!(
                "{} binary variables exceed the limit of {MAX_VARIABLES}",
                vars.len()
            )));
        }
        Ok(Self { vars, n_users, tau_max, modulation: Some(modulation) })
    }

    /// `n` unconstrained variables, one per pseudo-UT; used for generic HUBOs.
    pub fn generic(n: usize) -> Result<Self> {
        if n > MAX_VARIABLES {
            return Err(Error::Capacity(format!("{n} binary variables exceed the limit of {MAX_VARIABLES}")));
        }
        let vars = (0..n).map(|user| Variable { kind: VarKind::Bit, user, sub: 0 }).collect();
        Ok(Self { vars, n_users: n, tau_max: 0, modulation: None })
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn modulation(&self) -> Option<Modulation> {
        self.modulation
    }

    pub fn has_parity_vars(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Parity)
    }

    pub fn index_of(&self, kind: VarKind, user: usize, sub: usize) -> Option<usize> {
        self.vars.iter().position(|v| v.kind == kind && v.user == user && v.sub == sub)
    }

    /// Registry indices of every variable belonging to `user`, canonical order.
    pub fn user_vars(&self, user: usize) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].user == user).collect()
    }

    pub fn indices_of_kind(&self, kind: VarKind, user: usize) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].kind == kind && self.vars[i].user == user).collect()
    }

    pub fn decode(&self, x: Assignment) -> Decoded {
        let pick = |kind| self.vars.iter().enumerate().filter(|(_, v)| v.kind == kind).map(|(i, _)| x.bit(i)).collect();
        Decoded { b: pick(VarKind::Bit), c: pick(VarKind::Parity), d: pick(VarKind::Delay) }
    }

    /// Inverse of [`decode`](Self::decode); `c` is ignored without parity variables.
    pub fn encode(&self, b: &[u8], c: &[u8], d: &[u8]) -> Assignment {
        let (mut ib, mut ic, mut id) = (0, 0, 0);
        let mut x = Assignment(0);
        for (i, v) in self.vars.iter().enumerate() {
            let bit = match v.kind {
                VarKind::Bit => {
                    ib += 1;
                    b[ib - 1]
                }
                VarKind::Parity => {
                    ic += 1;
                    c[ic - 1]
                }
                VarKind::Delay => {
                    id += 1;
                    d[id - 1]
                }
            };
            x = x.with_bit(i, bit);
        }
        x
    }

    /// True when every UT's delay block has Hamming weight one.
    pub fn is_one_hot(&self, x: Assignment) -> bool {
        (0..self.n_users).all(|m| {
            let idx = self.indices_of_kind(VarKind::Delay, m);
            idx.is_empty() || idx.iter().map(|&i| x.bit(i) as usize).sum::<usize>() == 1
        })
    }

    /// Detected delays when the assignment is one-hot.
    pub fn delays(&self, x: Assignment) -> Option<Vec<usize>> {
        (0..self.n_users)
            .map(|m| {
                let idx = self.indices_of_kind(VarKind::Delay, m);
                let set: Vec<usize> = idx.iter().enumerate().filter(|(_, &i)| x.bit(i) == 1).map(|(k, _)| k).collect();
                (set.len() == 1).then(|| set[0])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psk2_qubit_count() {
        for (m, tau) in [(1, 0), (2, 1), (4, 1), (4, 5), (8, 2)] {
            let reg = VarRegistry::mimo(Modulation::Psk2, m, tau, false).unwrap();
            assert_eq!(reg.len(), m * (tau + 2));
            let with_c = VarRegistry::mimo(Modulation::Psk2, m, tau, true).unwrap();
            assert_eq!(with_c.len(), m * (tau + 3));
        }
    }

    #[test]
    fn qpsk_layout() {
        let reg = VarRegistry::mimo(Modulation::Qpsk, 3, 2, true).unwrap();
        assert_eq!(reg.len(), 2 * 3 + 3 * 3);
        assert!(!reg.has_parity_vars());
        assert_eq!(reg.index_of(VarKind::Bit, 1, 1), Some(3));
        assert_eq!(reg.index_of(VarKind::Delay, 0, 0), Some(6));
        assert_eq!(reg.index_of(VarKind::Delay, 2, 2), Some(14));
    }

    #[test]
    fn encode_decode_inverse() {
        let reg = VarRegistry::mimo(Modulation::Psk2, 3, 1, true).unwrap();
        let (b, c, d) = (vec![1, 0, 1], vec![0, 1, 1], vec![0, 1, 1, 0, 0, 1]);
        let x = reg.encode(&b, &c, &d);
        assert_eq!(reg.decode(x), Decoded { b, c, d });
        assert!(reg.is_one_hot(x));
        assert_eq!(reg.delays(x), Some(vec![1, 0, 1]));
    }

    #[test]
    fn one_hot_detection() {
        let reg = VarRegistry::mimo(Modulation::Psk2, 2, 2, false).unwrap();
        assert!(!reg.is_one_hot(reg.encode(&[0, 0], &[], &[1, 1, 0, 0, 1, 0])));
        assert!(!reg.is_one_hot(reg.encode(&[0, 0], &[], &[0, 0, 0, 0, 1, 0])));
        assert!(reg.delays(reg.encode(&[0, 0], &[], &[0, 0, 0, 0, 1, 0])).is_none());
    }

    #[test]
    fn oversized_registry_rejected() {
        assert!(VarRegistry::mimo(Modulation::Qpsk, 8, 7, false).unwrap_err().is_capacity());
        assert!(VarRegistry::generic(65).is_err());
    }
}
