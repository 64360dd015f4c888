use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::{HuboPolynomial, VarKind, VarRegistry};
use crate::channel::{delay_phase, parity, ChannelInstance, Modulation, SlotProblem};
use crate::error::{Error, Result};

/// Relative magnitude below which expanded monomials are treated as zero.
pub const PRUNE_REL: f64 = 1e-12;
/// Largest tolerated imaginary part of a collected coefficient.
pub const IMAG_TOL: f64 = 1e-9;

/// Complex multilinear polynomial used during expansion.
#[derive(Clone, Debug, Default)]
struct CPoly(BTreeMap<u64, Complex64>);

impl CPoly {
    fn constant(c: Complex64) -> Self {
        let mut p = Self::default();
        p.add(0, c);
        p
    }

    /// `a + b x_var`.
    fn affine(a: Complex64, b: Complex64, var: usize) -> Self {
        let mut p = Self::constant(a);
        p.add(1 << var, b);
        p
    }

    fn add(&mut self, mask: u64, c: Complex64) {
        *self.0.entry(mask).or_default() += c;
    }

    fn add_scaled(&mut self, other: &CPoly, s: Complex64) {
        for (&m, &c) in &other.0 {
            self.add(m, c * s);
        }
    }

    fn mul(&self, other: &CPoly) -> CPoly {
        let mut out = CPoly::default();
        for (&ma, &ca) in &self.0 {
            for (&mb, &cb) in &other.0 {
                out.add(ma | mb, ca * cb);
            }
        }
        out
    }

    fn conj(&self) -> CPoly {
        CPoly(self.0.iter().map(|(&m, c)| (m, c.conj())).collect())
    }
}

/// Expands `||r - H D s||^2` for `inst` into a HUBO.
///
/// With `include_c` (pi/2-BPSK only) the parity bits are free variables;
/// otherwise they are fixed to `t mod 2`.
pub fn build_hubo(
    inst: &ChannelInstance,
    r: &[Complex64],
    t: u64,
    include_c: bool,
) -> Result<(HuboPolynomial, VarRegistry)> {
    if r.len() != inst.n_rx() {
        return Err(Error::LengthMismatch { expected: inst.n_rx(), got: r.len() });
    }
    build_hubo_for_slot(&SlotProblem::new(inst, r, t), include_c)
}

pub fn build_hubo_for_slot(p: &SlotProblem, include_c: bool) -> Result<(HuboPolynomial, VarRegistry)> {
    let reg = VarRegistry::mimo(p.modulation, p.n_users(), p.tau_max, include_c)?;
    let users: Vec<CPoly> = (0..p.n_users()).map(|m| user_signal(p, &reg, m)).collect();

    let mut acc = CPoly::default();
    for n in 0..p.n_rx() {
        let mut resid = CPoly::constant(p.r[n]);
        for (m, x) in users.iter().enumerate() {
            resid.add_scaled(x, -p.h.get(n, m));
        }
        let sq = resid.conj().mul(&resid);
        for (m, c) in sq.0 {
            acc.add(m, c);
        }
    }

    let max = acc.0.values().map(|c| c.norm()).fold(0.0, f64::max);
    let mut real = BTreeMap::new();
    for (mask, c) in acc.0 {
        if !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::Numeric("non-finite coefficient in expansion".into()));
        }
        if c.im.abs() > IMAG_TOL * (1.0 + max) {
            return Err(Error::Numeric(format!("imaginary residue {:.3e} on monomial {mask:#x}", c.im)));
        }
        if mask == 0 || c.re.abs() >= PRUNE_REL * max {
            real.insert(mask, c.re);
        }
    }
    let constant = real.remove(&0).unwrap_or(0.0);
    Ok((HuboPolynomial::from_masks(reg.len(), constant, real)?, reg))
}

/// Symbolic `D_m s_m` for UT `m`.
fn user_signal(p: &SlotProblem, reg: &VarRegistry, m: usize) -> CPoly {
    let bits = reg.indices_of_kind(VarKind::Bit, m);
    let sym = match p.modulation {
        Modulation::Psk2 => {
            let base = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
            let sign = CPoly::affine(base, -2.0 * base, bits[0]);
            match reg.index_of(VarKind::Parity, m, 0) {
                // e^{j pi c / 2} = 1 + (j - 1) c
                Some(ci) => sign.mul(&CPoly::affine(Complex64::new(1.0, 0.0), Complex64::new(-1.0, 1.0), ci)),
                None => {
                    let rot = if parity(p.t) == 1 { Complex64::i() } else { Complex64::new(1.0, 0.0) };
                    CPoly(sign.0.into_iter().map(|(k, c)| (k, c * rot)).collect())
                }
            }
        }
        Modulation::Qpsk => {
            let s = FRAC_1_SQRT_2;
            let mut q = CPoly::constant(Complex64::new(s, s));
            q.add(1 << bits[0], Complex64::new(-2.0 * s, 0.0));
            q.add(1 << bits[1], Complex64::new(0.0, -2.0 * s));
            q
        }
    };
    let mut delay = CPoly::default();
    for (k, &di) in reg.indices_of_kind(VarKind::Delay, m).iter().enumerate() {
        delay.add(1 << di, delay_phase(p.f[m], p.t, k));
    }
    delay.mul(&sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_instance, random_slot, CMatrix, SystemConfig};
    use crate::hubo::Assignment;

    fn tiny_instance() -> ChannelInstance {
        let cfg = SystemConfig { n_rx: 1, n_users: 1, tau_max: 0, preamble_len: None, ..Default::default() };
        let mut inst = generate_instance(&cfg).unwrap();
        inst.h_est = CMatrix::from_rows(&[vec![Complex64::new(1.0, 0.0)]]);
        inst.h_true = inst.h_est.clone();
        inst.f_est = vec![0.0];
        inst.f_true = vec![0.0];
        inst
    }

    #[test]
    fn single_user_example() {
        let inst = tiny_instance();
        let r = [Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)];
        let (poly, reg) = build_hubo(&inst, &r, 0, false).unwrap();
        assert_eq!(reg.len(), 2);
        assert!(poly.eval(&[0, 1]).unwrap().abs() < 1e-12);
        assert!((poly.eval(&[1, 1]).unwrap() - 4.0).abs() < 1e-12);
        assert!((poly.eval(&[0, 0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_evaluation() {
        for modulation in [Modulation::Psk2, Modulation::Qpsk] {
            for include_c in [false, true] {
                let cfg = SystemConfig { n_rx: 2, n_users: 3, tau_max: 1, modulation, seed: 5, ..Default::default() };
                let inst = generate_instance(&cfg).unwrap();
                let slot = random_slot(&inst, 3);
                let (poly, reg) = build_hubo(&inst, &slot.r, 3, include_c).unwrap();
                for x in 0..(1u64 << reg.len()) {
                    let dec = reg.decode(Assignment(x));
                    let direct = objective_direct_full(&inst, &slot.r, 3, &dec.b, &dec.d, &dec.c);
                    let e = poly.eval_assignment(Assignment(x));
                    assert!((e - direct).abs() <= 1e-9 * (1.0 + e.abs()), "{modulation:?} {include_c} {x}");
                }
            }
        }
    }

    fn objective_direct_full(inst: &ChannelInstance, r: &[Complex64], t: u64, b: &[u8], d: &[u8], c: &[u8]) -> f64 {
        crate::channel::objective_direct(inst, r, t, b, d, c)
    }

    #[test]
    fn all_zero_gives_received_energy() {
        let cfg = SystemConfig { seed: 9, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 0);
        let (poly, _) = build_hubo(&inst, &slot.r, 0, false).unwrap();
        let energy: f64 = slot.r.iter().map(|z| z.norm_sqr()).sum();
        assert!((poly.constant() - energy).abs() < 1e-12);
    }

    #[test]
    fn degree_bounds() {
        let cfg = SystemConfig { n_users: 3, tau_max: 2, seed: 2, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 1);
        assert_eq!(build_hubo(&inst, &slot.r, 1, true).unwrap().0.degree(), 6);
        assert_eq!(build_hubo(&inst, &slot.r, 1, false).unwrap().0.degree(), 4);
    }

    #[test]
    fn wrong_receive_length() {
        let inst = tiny_instance();
        assert!(build_hubo(&inst, &[], 0, false).is_err());
    }
}
