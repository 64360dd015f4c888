use num_complex::Complex64;

/// Key-register gates used by the state preparations. Qubit indices are
/// registry variable indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Ry(usize, f64),
    Cx { control: usize, target: usize },
    Cry { control: usize, target: usize, theta: f64 },
}

impl Gate {
    pub fn inverse(self) -> Gate {
        match self {
            Gate::Ry(q, t) => Gate::Ry(q, -t),
            Gate::Cry { control, target, theta } => Gate::Cry { control, target, theta: -theta },
            g => g,
        }
    }

    fn target(self) -> usize {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Ry(q, _) => q,
            Gate::Cx { target, .. } | Gate::Cry { target, .. } => target,
        }
    }

    fn control(self) -> Option<usize> {
        match self {
            Gate::Cx { control, .. } | Gate::Cry { control, .. } => Some(control),
            _ => None,
        }
    }

    /// Row-major 2x2 matrix of the target action.
    fn matrix(self) -> [[f64; 2]; 2] {
        use std::f64::consts::FRAC_1_SQRT_2 as S;
        match self {
            Gate::H(_) => [[S, S], [S, -S]],
            Gate::X(_) | Gate::Cx { .. } => [[0.0, 1.0], [1.0, 0.0]],
            Gate::Ry(_, t) | Gate::Cry { theta: t, .. } => {
                let (s, c) = (t / 2.0).sin_cos();
                [[c, -s], [s, c]]
            }
        }
    }

    /// Applies the gate to `amps`, where qubit `q` is bit `offset + q` of the
    /// amplitude index.
    pub fn apply(self, amps: &mut [Complex64], offset: usize) {
        let t = 1usize << (offset + self.target());
        let ctrl = self.control().map_or(0, |c| 1usize << (offset + c));
        let m = self.matrix();
        for i in 0..amps.len() {
            if i & t != 0 || i & ctrl != ctrl {
                continue;
            }
            let (a, b) = (amps[i], amps[i | t]);
            amps[i] = a * m[0][0] + b * m[0][1];
            amps[i | t] = a * m[1][0] + b * m[1][1];
        }
    }
}

/// Ordered gate list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn push(&mut self, g: Gate) {
        self.gates.push(g);
    }

    pub fn inverse(&self) -> Circuit {
        Circuit { gates: self.gates.iter().rev().map(|g| g.inverse()).collect() }
    }

    pub fn apply(&self, amps: &mut [Complex64], offset: usize) {
        for g in &self.gates {
            g.apply(amps, offset);
        }
    }
}
