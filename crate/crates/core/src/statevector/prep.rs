use num_complex::Complex64;

use super::gates::{Circuit, Gate};
use crate::hubo::{Preparation, VarKind, VarRegistry};

/// Cascade angles producing an `n`-qubit W state from `|10...0>`.
///
/// Step `i` rotates qubit `i` controlled on qubit `i-1` by
/// `2 asin(sqrt((n-i)/(n+1-i)))` and then moves the excitation with a CX.
pub fn w_state_angles(n: usize) -> Vec<f64> {
    (1..n).map(|i| 2.0 * (((n - i) as f64) / ((n + 1 - i) as f64)).sqrt().asin()).collect()
}

/// W-state circuit on the given qubits.
pub fn w_state_circuit(qubits: &[usize]) -> Circuit {
    let mut c = Circuit::default();
    if qubits.is_empty() {
        return c;
    }
    c.push(Gate::X(qubits[0]));
    for (i, theta) in w_state_angles(qubits.len()).into_iter().enumerate() {
        let (prev, cur) = (qubits[i], qubits[i + 1]);
        c.push(Gate::Cry { control: prev, target: cur, theta });
        c.push(Gate::Cx { control: cur, target: prev });
    }
    c
}

/// Key-register preparation circuit for `prep`.
pub fn preparation_circuit(reg: &VarRegistry, prep: Preparation) -> Circuit {
    let mut c = Circuit::default();
    let reduced = prep == Preparation::WStateReduced && reg.modulation().is_some();
    for m in 0..reg.n_users() {
        for i in reg.user_vars(m) {
            if !(reduced && reg.vars()[i].kind == VarKind::Delay) {
                c.push(Gate::H(i));
            }
        }
        if reduced {
            c.gates.extend(w_state_circuit(&reg.indices_of_kind(VarKind::Delay, m)).gates);
        }
    }
    c
}

/// Key-register amplitudes after the preparation circuit.
pub fn key_amplitudes(reg: &VarRegistry, prep: Preparation) -> Vec<Complex64> {
    let mut amps = vec![Complex64::default(); 1 << reg.len()];
    amps[0] = Complex64::new(1.0, 0.0);
    preparation_circuit(reg, prep).apply(&mut amps, 0);
    amps
}
