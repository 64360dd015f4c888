//! Dense statevector simulation of the GAS circuit.
//!
//! Layout: amplitude index `(key << q_v) | v`. The key register holds the
//! registry variables (bit `i` of `key` is variable `i`); the value register
//! holds `E(x) - y` in two's complement with the sign qubit as the most
//! significant bit of `v`. Each key therefore owns a contiguous chunk of
//! `2^q_v` amplitudes.
//!
//! `A_y` is: key preparation, Hadamards on the value register, the phase
//! `e^{2 pi i v (E(x) - y) / 2^q_v}` (the product of all controlled `U_G`
//! blocks), and an inverse QFT on the value register.

mod encoding;
mod gates;
mod prep;

pub use encoding::{
    apply_objective_encoding, apply_objective_encoding_literal, choose_qv, choose_qv_for_polynomial,
    choose_qv_for_slot, invert_objective_encoding, mimo_value_bound,
};
pub use gates::{Circuit, Gate};
pub use prep::{key_amplitudes, preparation_circuit, w_state_angles, w_state_circuit};

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, Preparation, VarRegistry};
use crate::parallel::{self, Parallelism};

/// Largest simulated register.
pub const MAX_QUBITS: usize = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    q_k: usize,
    q_v: usize,
    amps: Vec<Complex64>,
    mode: Parallelism,
}

impl StateVector {
    /// `|0...0>` on `q_k + q_v` qubits.
    pub fn zero(q_k: usize, q_v: usize) -> Result<Self> {
        let q = q_k + q_v;
        if q > MAX_QUBITS {
            return Err(Error::Capacity(format!("{q} qubits exceed the dense-simulation limit of {MAX_QUBITS}")));
        }
        let mut amps = vec![Complex64::default(); 1 << q];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { q_k, q_v, amps, mode: Parallelism::default() })
    }

    pub fn with_parallelism(mut self, mode: Parallelism) -> Self {
        self.mode = mode;
        self
    }

    pub fn parallelism(&self) -> Parallelism {
        self.mode
    }

    pub fn q_k(&self) -> usize {
        self.q_k
    }

    pub fn q_v(&self) -> usize {
        self.q_v
    }

    pub fn n_qubits(&self) -> usize {
        self.q_k + self.q_v
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn value_dim(&self) -> usize {
        1 << self.q_v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.chunk_sums(|c| c.iter().map(|a| a.norm_sqr()).sum())
    }

    /// Sum over key chunks in a fixed order, so results do not depend on the
    /// parallelism mode.
    fn chunk_sums<F: Fn(&[Complex64]) -> f64 + Sync + Send>(&self, f: F) -> f64 {
        parallel::map_chunks(&self.amps, self.value_dim(), self.mode, |_, c| f(c)).into_iter().sum()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        let n = self.value_dim();
        let parts = parallel::map_chunks(&self.amps, n, self.mode, |i, c| {
            c.iter().zip(&other.amps[i * n..(i + 1) * n]).map(|(a, b)| a.conj() * b).sum::<Complex64>()
        });
        parts.into_iter().sum()
    }

    /// Marginal probability of each key.
    pub fn key_probabilities(&self) -> Vec<f64> {
        parallel::map_chunks(&self.amps, self.value_dim(), self.mode, |_, c| c.iter().map(|a| a.norm_sqr()).sum())
    }

    /// Probability that the sign qubit reads 1, i.e. `E(x) - y < 0`.
    pub fn marked_probability(&self) -> f64 {
        let half = self.value_dim() / 2;
        self.chunk_sums(|c| c[half..].iter().map(|a| a.norm_sqr()).sum())
    }

    /// Value-register distribution conditioned on nothing (summed over keys).
    pub fn value_probabilities(&self) -> Vec<f64> {
        let n = self.value_dim();
        let mut out = vec![0.0; n];
        for c in self.amps.chunks(n) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += a.norm_sqr();
            }
        }
        out
    }

    /// Phase flip on the sign qubit (Pauli-Z on the value MSB).
    pub fn apply_oracle(&mut self) {
        let half = self.value_dim() / 2;
        let mode = self.mode;
        parallel::for_each_chunk_mut(&mut self.amps, 2 * half, mode, |_, c| {
            c[half..].iter_mut().for_each(|a| *a = -*a);
        });
    }

    /// `2|0><0| - I` over all qubits.
    pub fn apply_zero_reflection(&mut self) {
        let (mode, n) = (self.mode, self.value_dim());
        parallel::for_each_chunk_mut(&mut self.amps, n, mode, |i, c| {
            let skip = usize::from(i == 0);
            c[skip..].iter_mut().for_each(|a| *a = -*a);
        });
    }

    /// Samples a key from its marginal distribution.
    pub fn measure_key<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let probs = self.key_probabilities();
        let total: f64 = probs.iter().sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (k, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                last = k;
                acc += p;
                if u < acc {
                    return Assignment(k as u64);
                }
            }
        }
        Assignment(last as u64)
    }

    /// Raw dump: little-endian `f64` pairs `(re, im)` in index order.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Key preparation followed by Hadamards on the value register.
pub fn prepare_initial(reg: &VarRegistry, prep: Preparation, q_v: usize) -> Result<StateVector> {
    let mut sv = StateVector::zero(reg.len(), q_v)?;
    let key = key_amplitudes(reg, prep);
    let n = sv.value_dim();
    let scale = 1.0 / (n as f64).sqrt();
    parallel::for_each_chunk_mut(&mut sv.amps, n, sv.mode, |k, c| {
        c.iter_mut().for_each(|a| *a = key[k] * scale);
    });
    Ok(sv)
}

/// `A_y` for one threshold, with `A_y|0>` cached for the diffusion step.
#[derive(Clone, Debug)]
pub struct GroverCircuit<'a> {
    reg: &'a VarRegistry,
    poly: &'a HuboPolynomial,
    prep: Preparation,
    y: f64,
    q_v: usize,
    psi: StateVector,
}

impl<'a> GroverCircuit<'a> {
    pub fn new(
        reg: &'a VarRegistry,
        poly: &'a HuboPolynomial,
        prep: Preparation,
        y: f64,
        q_v: usize,
        mode: Parallelism,
    ) -> Result<Self> {
        if poly.n_vars() != reg.len() {
            return Err(Error::LengthMismatch { expected: reg.len(), got: poly.n_vars() });
        }
        let mut psi = prepare_initial(reg, prep, q_v)?.with_parallelism(mode);
        apply_objective_encoding(&mut psi, poly, y)?;
        Ok(Self { reg, poly, prep, y, q_v, psi })
    }

    /// `A_y|0>`.
    pub fn initial_state(&self) -> &StateVector {
        &self.psi
    }

    /// `A_y` applied to an arbitrary state.
    pub fn apply_a(&self, sv: &mut StateVector) -> Result<()> {
        // key qubits sit above the value register
        preparation_circuit(self.reg, self.prep).apply(&mut sv.amps, self.q_v);
        for v in 0..self.q_v {
            Gate::H(v).apply(&mut sv.amps, 0);
        }
        apply_objective_encoding(sv, self.poly, self.y)
    }

    /// `A_y^dagger` applied to an arbitrary state.
    pub fn apply_a_inverse(&self, sv: &mut StateVector) {
        invert_objective_encoding(sv, self.poly, self.y);
        for v in (0..self.q_v).rev() {
            Gate::H(v).apply(&mut sv.amps, 0);
        }
        preparation_circuit(self.reg, self.prep).inverse().apply(&mut sv.amps, self.q_v);
    }

    /// One Grover rotation `A_y D A_y^dagger O`, with the sandwiched
    /// reflection computed as `2|psi><psi| - I`.
    pub fn iterate(&self, sv: &mut StateVector) {
        sv.apply_oracle();
        let overlap = self.psi.inner(sv) * 2.0;
        let n = sv.value_dim();
        let psi = &self.psi.amps;
        parallel::for_each_chunk_mut(&mut sv.amps, n, sv.mode, |i, c| {
            for (a, p) in c.iter_mut().zip(&psi[i * n..(i + 1) * n]) {
                *a = p * overlap - *a;
            }
        });
    }

    /// Same rotation built from the literal operators `A_y^dagger`, `D`, `A_y`.
    pub fn iterate_literal(&self, sv: &mut StateVector) -> Result<()> {
        sv.apply_oracle();
        self.apply_a_inverse(sv);
        sv.apply_zero_reflection();
        self.apply_a(sv)
    }

    /// `G^L A_y |0>`.
    pub fn state_after(&self, l: u64) -> StateVector {
        let mut sv = self.psi.clone();
        for _ in 0..l {
            self.iterate(&mut sv);
        }
        sv
    }
}
