//! Initial thresholds for the search: random, minimum-value-distribution
//! quantile, MMSE and (in [`crate::baselines`]) SDR.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::channel::{delay_phase, parity, Modulation, SlotProblem, SystemConfig};
use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, SearchSpace, VarRegistry};

/// `Q(n, x) = e^{-x} sum_{k<n} x^k / k!` for integer shape `n >= 1`.
pub fn regularized_gamma_q(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "shape must be positive");
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= x / k as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Gamma rate of the minimum objective value. `preamble_energy = None`
/// means perfect channel knowledge.
pub fn lambda_v(noise_var: f64, preamble_energy: Option<f64>) -> f64 {
    match preamble_energy {
        Some(e) => {
            let s = e.sqrt();
            (s / (s + 1.0)).powi(2) / noise_var
        }
        None => 1.0 / noise_var,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvdParams {
    pub n_rx: usize,
    pub lambda_v: f64,
    pub p: f64,
}

impl MvdParams {
    pub fn from_config(cfg: &SystemConfig, p: f64) -> Self {
        Self { n_rx: cfg.n_rx, lambda_v: lambda_v(cfg.noise_var(), cfg.preamble_energy()), p }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || !(self.lambda_v > 0.0 && self.lambda_v.is_finite()) {
            return Err(Error::InvalidConfig("MVD needs n_rx >= 1 and a positive finite rate".into()));
        }
        if !(self.p < 1.0 && self.p >= 1e-12) {
            return Err(Error::InvalidConfig(format!("exceedance probability {} outside [1e-12, 1)", self.p)));
        }
        Ok(())
    }

    /// CDF of the minimum value, `1 - Q(N, lambda_v y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        1.0 - regularized_gamma_q(self.n_rx as u32, self.lambda_v * y.max(0.0))
    }
}

/// Solves `Q(n, x) = p` by bisection.
pub fn inverse_gamma_q(n: u32, p: f64) -> f64 {
    let mut hi = 1.0;
    while regularized_gamma_q(n, hi) > p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let q = regularized_gamma_q(n, mid);
        if (q - p).abs() <= 1e-12 * p.min(1.0) || hi - lo <= f64::EPSILON * hi {
            return mid;
        }
        if q > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Threshold exceeded by the minimum objective value with probability `p`.
pub fn y_mvd(params: &MvdParams) -> Result<f64> {
    params.validate()?;
    Ok(inverse_gamma_q(params.n_rx as u32, params.p) / params.lambda_v)
}

/// One draw of `sum_n |sigma_v v_n + e_n|^2`, the objective at the true
/// hypothesis, with independent circular Gaussian `v_n` and `e_n`.
pub fn sample_e_min<R: Rng + ?Sized>(n_rx: usize, noise_var: f64, est_err_var: f64, rng: &mut R) -> f64 {
    let var = noise_var + est_err_var;
    (0..n_rx)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            0.5 * var * (re * re + im * im)
        })
        .sum()
}

/// Uniformly random candidate of the searched space and its value.
pub fn y_rand(poly: &HuboPolynomial, space: &SearchSpace, rng: &mut dyn RngCore) -> (Assignment, f64) {
    let x = space.get(rng.random_range(0..space.len()));
    (x, poly.eval_assignment(x))
}

/// Delay hypothesis number `i` in base `tau_dot`, UT 0 least significant.
pub fn delay_combination(i: usize, n_users: usize, tau_dot: usize) -> Vec<usize> {
    let mut rest = i;
    (0..n_users)
        .map(|_| {
            let d = rest % tau_dot;
            rest /= tau_dot;
            d
        })
        .collect()
}

/// `H diag(D_m)` for a delay hypothesis, as an nalgebra matrix.
pub fn effective_channel(p: &SlotProblem, delays: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(p.n_rx(), p.n_users(), |n, m| p.h.get(n, m) * delay_phase(p.f[m], p.t, delays[m]))
}

/// Nearest-symbol bits for a soft estimate of UT's symbol in slot `t`.
/// Ties resolve to bit 0.
pub fn quantize_symbol(modulation: Modulation, s: Complex64, t: u64) -> Vec<u8> {
    match modulation {
        Modulation::Psk2 => {
            let base =
                Complex64::new(1.0, 1.0) * if parity(t) == 1 { Complex64::i() } else { Complex64::new(1.0, 0.0) };
            vec![u8::from((s * base.conj()).re < 0.0)]
        }
        Modulation::Qpsk => vec![u8::from(s.re < 0.0), u8::from(s.im < 0.0)],
    }
}

fn mmse_filter(a: &DMatrix<Complex64>, noise_var: f64) -> DMatrix<Complex64> {
    let n = a.nrows();
    let ah = a.adjoint();
    let g = a * &ah + DMatrix::<Complex64>::identity(n, n) * Complex64::new(noise_var, 0.0);
    let inv = g.clone().try_inverse().unwrap_or_else(|| {
        let ridge = g + DMatrix::<Complex64>::identity(n, n) * Complex64::new(noise_var.max(1e-12), 0.0);
        ridge.pseudo_inverse(1e-12).expect("pseudo-inverse of a Hermitian matrix")
    });
    ah * inv
}

/// Best quantized linear-MMSE estimate over every delay hypothesis.
/// `reg` must be the fixed-parity registry of `p`.
pub fn y_mmse(p: &SlotProblem, reg: &VarRegistry) -> Result<(Assignment, f64)> {
    if reg.has_parity_vars() {
        return Err(Error::InvalidConfig("MMSE threshold expects fixed parity bits".into()));
    }
    let (m, td) = (p.n_users(), p.tau_dot());
    let combos = td.checked_pow(m as u32).ok_or_else(|| Error::Capacity("delay hypotheses overflow".into()))?;
    let r = DMatrix::from_column_slice(p.n_rx(), 1, &p.r);
    let mut best: Option<(Assignment, f64)> = None;
    for i in 0..combos {
        let delays = delay_combination(i, m, td);
        let a = effective_channel(p, &delays);
        let s = mmse_filter(&a, p.noise_var) * &r;
        let b: Vec<u8> = (0..m).flat_map(|u| quantize_symbol(p.modulation, s[u], p.t)).collect();
        let d = crate::channel::one_hot_delays(&delays, p.tau_max);
        let value = p.objective(&b, &[], &d);
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((reg.encode(&b, &[], &d), value));
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("no UTs".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_instance, random_slot, CMatrix};
    use crate::hubo::{build_hubo, Preparation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_q_values() {
        for x in [0.0, 0.3, 2.0, 7.5] {
            assert!((regularized_gamma_q(1, x) - (-x).exp()).abs() < 1e-15);
        }
        assert_eq!(regularized_gamma_q(3, 0.0), 1.0);
        assert!((regularized_gamma_q(2, 9.2334) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn gamma_q_decreasing() {
        let mut prev = 1.0;
        for i in 1..200 {
            let q = regularized_gamma_q(4, i as f64 * 0.1);
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn y_mvd_values() {
        let p = MvdParams { n_rx: 1, lambda_v: 4.0, p: 1e-3 };
        assert!((y_mvd(&p).unwrap() + (1e-3f64).ln() / 4.0).abs() < 1e-10);
        let p = MvdParams { n_rx: 2, lambda_v: 25.0, p: 1e-3 };
        let y = y_mvd(&p).unwrap();
        assert!((y - 0.36934).abs() < 1e-5);
        assert!((regularized_gamma_q(2, 25.0 * y) - 1e-3).abs() <= 1e-12);
        let looser = MvdParams { p: 1e-2, ..p };
        assert!(y > y_mvd(&looser).unwrap());
        assert!(y_mvd(&MvdParams { p: 1e-13, ..p }).is_err());
    }

    #[test]
    fn rate_formula() {
        assert!((lambda_v(0.01, Some(128.0)) - (128f64.sqrt() / (128f64.sqrt() + 1.0)).powi(2) / 0.01).abs() < 1e-9);
        assert_eq!(lambda_v(0.5, None), 2.0);
    }

    #[test]
    fn mmse_recovers_noiseless_symbol() {
        let cfg =
            SystemConfig { n_rx: 1, n_users: 1, tau_max: 0, preamble_len: None, snr_db: 300.0, ..Default::default() };
        let mut inst = generate_instance(&cfg).unwrap();
        inst.h_est = CMatrix::from_rows(&[vec![Complex64::new(0.3, -0.8)]]);
        inst.h_true = inst.h_est.clone();
        let slot = random_slot(&inst, 5);
        let p = SlotProblem::new(&inst, &slot.r, 5);
        let reg = VarRegistry::mimo(Modulation::Psk2, 1, 0, false).unwrap();
        let (x, v) = y_mmse(&p, &reg).unwrap();
        assert!(v < 1e-20);
        assert_eq!(reg.decode(x).b, slot.b_true);
    }

    #[test]
    fn mmse_matches_push_through_recomputation() {
        for modulation in [Modulation::Psk2, Modulation::Qpsk] {
            let cfg = SystemConfig { modulation, n_users: 3, tau_max: 1, seed: 17, snr_db: 10.0, ..Default::default() };
            let inst = generate_instance(&cfg).unwrap();
            let slot = random_slot(&inst, 2);
            let p = SlotProblem::new(&inst, &slot.r, 2);
            let reg = VarRegistry::mimo(modulation, 3, 1, false).unwrap();
            let (_, v) = y_mmse(&p, &reg).unwrap();
            // (A^H A + s I)^-1 A^H equals A^H (A A^H + s I)^-1
            let r = DMatrix::from_column_slice(p.n_rx(), 1, &p.r);
            let mut best = f64::INFINITY;
            for i in 0..8 {
                let delays = delay_combination(i, 3, 2);
                let a = effective_channel(&p, &delays);
                let g = a.adjoint() * &a + DMatrix::<Complex64>::identity(3, 3) * Complex64::new(p.noise_var, 0.0);
                let s = g.try_inverse().unwrap() * a.adjoint() * &r;
                let b: Vec<u8> = (0..3).flat_map(|u| quantize_symbol(modulation, s[u], 2)).collect();
                best = best.min(p.objective(&b, &[], &crate::channel::one_hot_delays(&delays, 1)));
            }
            assert!((v - best).abs() < 1e-12);
            let (poly, reg) = build_hubo(&inst, &slot.r, 2, false).unwrap();
            let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
            let min = space.iter().map(|x| poly.eval_assignment(x)).fold(f64::INFINITY, f64::min);
            assert!(v >= min - 1e-12);
        }
    }

    #[test]
    fn y_rand_reproducible_and_unbiased() {
        let cfg = SystemConfig { seed: 3, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 0);
        let (poly, reg) = build_hubo(&inst, &slot.r, 0, false).unwrap();
        let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
        let a = y_rand(&poly, &space, &mut ChaCha8Rng::seed_from_u64(1));
        let b = y_rand(&poly, &space, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.1, poly.eval_assignment(a.0));
        let vals: Vec<f64> = space.iter().map(|x| poly.eval_assignment(x)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let emp = (0..n).map(|_| y_rand(&poly, &space, &mut rng).1).sum::<f64>() / n as f64;
        assert!((emp - mean).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn quantize_ties_go_to_zero_bit() {
        assert_eq!(quantize_symbol(Modulation::Qpsk, Complex64::new(0.0, -0.1), 0), vec![0, 1]);
        assert_eq!(quantize_symbol(Modulation::Psk2, Complex64::new(-1.0, -1.0), 0), vec![1]);
        assert_eq!(quantize_symbol(Modulation::Psk2, Complex64::new(-1.0, 1.0), 1), vec![0]);
    }
}
