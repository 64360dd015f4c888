//! Classical reference detectors: exhaustive MLD and the semidefinite
//! relaxation used to seed the search threshold.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{one_hot_delays, parity, Modulation, SlotProblem};
use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, SearchSpace, VarRegistry};
use crate::parallel::{self, Parallelism};
use crate::thresholds::{delay_combination, effective_channel};

/// Largest space the exhaustive detector will enumerate.
pub const MAX_EXHAUSTIVE_SPACE: u128 = 1 << 26;

/// Result of a full enumeration.
#[derive(Clone, Debug)]
pub struct MldResult {
    pub argmin: Assignment,
    pub min: f64,
    /// Every enumerated value, ascending.
    pub sorted_values: Vec<f64>,
}

impl MldResult {
    /// Number of enumerated states with `E(x) < y`.
    pub fn marked_count(&self, y: f64) -> u64 {
        self.sorted_values.partition_point(|&e| e < y) as u64
    }
}

/// Exhaustive minimization of `poly` over `space`. Ties keep the first
/// minimizer in enumeration order.
pub fn exhaustive_mld(poly: &HuboPolynomial, space: &SearchSpace, mode: Parallelism) -> Result<MldResult> {
    if space.len() > MAX_EXHAUSTIVE_SPACE {
        return Err(Error::Capacity(format!(
            "exhaustive search over {} states exceeds the limit of {MAX_EXHAUSTIVE_SPACE}",
            space.len()
        )));
    }
    let values = parallel::map_indexed(space.len() as usize, mode, |i| poly.eval_assignment(space.get(i as u128)));
    let (best, &min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::InvalidConfig("empty search space".into()))?;
    let argmin = space.get(best as u128);
    let mut sorted_values = values;
    sorted_values.sort_by(f64::total_cmp);
    Ok(MldResult { argmin, min, sorted_values })
}

/// Real-valued model `r̄ = [Re r; Im r]`, `H̄ = [[Re A, -Im A], [Im A, Re A]]`.
pub fn realify(r: &[Complex64], a: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, m) = a.shape();
    let rbar = DVector::from_fn(2 * n, |i, _| if i < n { r[i].re } else { r[i - n].im });
    let hbar = DMatrix::from_fn(2 * n, 2 * m, |i, j| {
        let z = a[(i % n, j % m)];
        match (i < n, j < m) {
            (true, true) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
            (false, false) => z.re,
        }
    });
    (rbar, hbar)
}

/// Relaxation `min Tr(W C)` subject to a unit diagonal and `W ⪰ 0`, with
/// `C = [[H̄ᵀH̄, -H̄ᵀr̄], [-r̄ᵀH̄, r̄ᵀr̄]]` over `v = [s̄; a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub cost: DMatrix<f64>,
}

impl SdpProblem {
    pub fn new(rbar: &DVector<f64>, hbar: &DMatrix<f64>) -> Self {
        let k = hbar.ncols();
        let hth = hbar.transpose() * hbar;
        let htr = hbar.transpose() * rbar;
        let mut cost = DMatrix::zeros(k + 1, k + 1);
        cost.view_mut((0, 0), (k, k)).copy_from(&hth);
        for i in 0..k {
            cost[(i, k)] = -htr[i];
            cost[(k, i)] = -htr[i];
        }
        cost[(k, k)] = rbar.dot(rbar);
        Self { cost }
    }

    /// Slot problem for one delay hypothesis. PSK2 absorbs the rotated
    /// constellation point into the channel so `s̄` is the `±1` sign vector;
    /// QPSK stacks real then imaginary parts.
    pub fn for_slot(p: &SlotProblem, delays: &[usize]) -> Self {
        let a = effective_channel(p, delays);
        match p.modulation {
            Modulation::Psk2 => {
                let base = crate::channel::psk2_symbol(0, parity(p.t));
                let (rbar, hbar) = realify(&p.r, &(a * base));
                let m = p.n_users();
                Self::new(&rbar, &hbar.columns(0, m).into_owned())
            }
            Modulation::Qpsk => {
                let (rbar, hbar) = realify(&p.r, &(a * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)));
                Self::new(&rbar, &hbar)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.cost.nrows()
    }

    pub fn objective(&self, w: &DMatrix<f64>) -> f64 {
        self.cost.component_mul(w).sum()
    }

    /// `vᵀ C v` for a sign vector `v = [s̄; 1]`.
    pub fn value_at(&self, s: &[f64]) -> f64 {
        let v = DVector::from_column_slice(s).push(1.0);
        v.dot(&(&self.cost * &v))
    }
}

#[derive(Clone, Debug)]
pub struct SdrSolution {
    pub w: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached before the objective settled.
    pub converged: bool,
}

/// Solves the relaxation by block-coordinate descent on a factorization
/// `W = VᵀV` with unit-norm columns. Each column update is the exact
/// minimizer given the others, so the objective never increases, and the
/// diagonal stays exactly one.
pub fn solve_sdr(problem: &SdpProblem, max_iter: usize, tol: f64) -> SdrSolution {
    let n = problem.dim();
    let c = &problem.cost;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D5);
    let mut v = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let objective = |v: &DMatrix<f64>| problem.objective(&(v.transpose() * v));
    let mut prev = objective(&v);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let mut g = DVector::<f64>::zeros(n);
            for j in (0..n).filter(|&j| j != i) {
                g.axpy(c[(i, j)], &v.column(j), 1.0);
            }
            let norm = g.norm();
            if norm > 1e-300 {
                v.set_column(i, &(-g / norm));
            }
        }
        let cur = objective(&v);
        if (prev - cur).abs() <= tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
        prev = cur;
    }
    let w = v.transpose() * &v;
    SdrSolution { objective: problem.objective(&w), w, iterations, converged }
}

/// Nearest of `±1`; zero maps to `+1`.
pub fn quantize(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub const SDR_MAX_ITER: usize = 5000;
pub const SDR_TOL: f64 = 1e-8;

/// Best quantized SDR estimate over every delay hypothesis, with its value.
/// `reg` must be the fixed-parity registry of `p`.
pub fn y_sdr(p: &SlotProblem, reg: &VarRegistry, mode: Parallelism) -> Result<(Assignment, f64)> {
    if reg.has_parity_vars() {
        return Err(Error::InvalidConfig("SDR threshold expects fixed parity bits".into()));
    }
    let (m, td) = (p.n_users(), p.tau_dot());
    let combos = td.checked_pow(m as u32).ok_or_else(|| Error::Capacity("delay hypotheses overflow".into()))?;
    let candidates = parallel::map_indexed(combos, mode, |i| {
        let delays = delay_combination(i, m, td);
        let prob = SdpProblem::for_slot(p, &delays);
        let sol = solve_sdr(&prob, SDR_MAX_ITER, SDR_TOL);
        let k = prob.dim() - 1;
        let s: Vec<f64> = (0..k).map(|i| quantize(sol.w[(i, k)])).collect();
        let b: Vec<u8> = match p.modulation {
            Modulation::Psk2 => s.iter().map(|&x| u8::from(x < 0.0)).collect(),
            Modulation::Qpsk => (0..m).flat_map(|u| [u8::from(s[u] < 0.0), u8::from(s[m + u] < 0.0)]).collect(),
        };
        let d = one_hot_delays(&delays, p.tau_max);
        let value = p.objective(&b, &[], &d);
        (reg.encode(&b, &[], &d), value)
    });
    candidates
        .into_iter()
        .reduce(|best, c| if c.1 < best.1 { c } else { best })
        .ok_or_else(|| Error::InvalidConfig("no UTs".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_instance, random_slot, CMatrix, SystemConfig};
    use crate::hubo::{build_hubo, Preparation};
    use crate::thresholds::y_rand;
    use proptest::prelude::*;

    fn slot(
        seed: u64,
        snr_db: f64,
        modulation: Modulation,
        tau_max: usize,
    ) -> (SlotProblem, HuboPolynomial, VarRegistry, crate::channel::ReceivedSlot) {
        let cfg = SystemConfig { seed, snr_db, modulation, tau_max, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let rs = random_slot(&inst, 3);
        let (poly, reg) = build_hubo(&inst, &rs.r, rs.t, false).unwrap();
        (SlotProblem::new(&inst, &rs.r, rs.t), poly, reg, rs)
    }

    #[test]
    fn realify_blocks() {
        let a = DMatrix::from_element(1, 1, Complex64::i());
        let (rbar, hbar) = realify(&[Complex64::new(1.0, 1.0)], &a);
        assert_eq!(rbar.as_slice(), &[1.0, 1.0]);
        assert_eq!(hbar, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn quantize_signs() {
        assert_eq!(quantize(0.9), 1.0);
        assert_eq!(quantize(-0.3), -1.0);
        assert_eq!(quantize(0.0), 1.0);
    }

    #[test]
    fn exhaustive_recount() {
        let (_, poly, reg, _) = slot(4, 20.0, Modulation::Psk2, 1);
        let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
        let res = exhaustive_mld(&poly, &space, Parallelism::Parallel).unwrap();
        assert_eq!(res.sorted_values.len() as u128, space.len());
        assert!(res.sorted_values.iter().all(|&v| v >= res.min));
        for y in [res.min, res.min + 0.5, 3.0, 100.0] {
            assert_eq!(res.marked_count(y), space.iter().filter(|&x| poly.eval_assignment(x) < y).count() as u64);
        }
    }

    #[test]
    fn noiseless_mld_recovers_truth() {
        let mut cfg = SystemConfig { seed: 9, snr_db: 300.0, preamble_len: None, ..Default::default() };
        cfg.tau_max = 1;
        let inst = generate_instance(&cfg).unwrap();
        let rs = random_slot(&inst, 2);
        let (poly, reg) = build_hubo(&inst, &rs.r, rs.t, false).unwrap();
        let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
        let res = exhaustive_mld(&poly, &space, Parallelism::Sequential).unwrap();
        assert!(res.min.abs() < 1e-9);
        let dec = reg.decode(res.argmin);
        assert_eq!(dec.b, rs.b_true);
        assert_eq!(dec.d, one_hot_delays(&inst.delays, inst.tau_max));
    }

    #[test]
    fn separable_single_user() {
        for modulation in [Modulation::Psk2, Modulation::Qpsk] {
            for t in 0..2u64 {
                let h = CMatrix::from_rows(&[vec![Complex64::new(0.8, -0.3)]]);
                let bits: Vec<u8> = if modulation == Modulation::Psk2 { vec![1] } else { vec![1, 0] };
                let p0 = SlotProblem { h, f: vec![0.0], r: vec![], t, modulation, tau_max: 0, noise_var: 0.0 };
                let r = p0.contribution(0, &bits, parity(t), &[1]);
                let p = SlotProblem { r, ..p0 };
                let reg = VarRegistry::mimo(modulation, 1, 0, false).unwrap();
                let (x, v) = y_sdr(&p, &reg, Parallelism::Sequential).unwrap();
                assert!(v < 1e-12);
                assert_eq!(reg.decode(x).b, bits);
            }
        }
    }

    #[test]
    fn relaxation_bounds_and_feasibility() {
        for (seed, modulation) in [(1, Modulation::Psk2), (2, Modulation::Qpsk), (3, Modulation::Psk2)] {
            let (p, poly, reg, _) = slot(seed, 10.0, modulation, 1);
            let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
            let mld = exhaustive_mld(&poly, &space, Parallelism::Sequential).unwrap();
            let delays = reg.delays(mld.argmin).unwrap();
            let prob = SdpProblem::for_slot(&p, &delays);
            let sol = solve_sdr(&prob, SDR_MAX_ITER, SDR_TOL);
            // Stopping on a 1e-8 step leaves a slightly larger optimality gap.
            assert!(sol.objective <= mld.min + 1e-6 * (1.0 + mld.min), "{} > {}", sol.objective, mld.min);
            for i in 0..prob.dim() {
                assert!((sol.w[(i, i)] - 1.0).abs() < 1e-6);
            }
            assert!((&sol.w - sol.w.transpose()).abs().max() < 1e-12);
            let eig = sol.w.clone().symmetric_eigenvalues();
            assert!(eig.min() > -1e-6);
            let (_, y) = y_sdr(&p, &reg, Parallelism::Sequential).unwrap();
            assert!(y >= mld.min - 1e-9);
        }
    }

    #[test]
    fn sdr_beats_random_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (mut sdr, mut rand) = (0.0, 0.0);
        for seed in 0..200 {
            let (p, poly, reg, _) = slot(1000 + seed, 20.0, Modulation::Psk2, 1);
            let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
            sdr += y_sdr(&p, &reg, Parallelism::Sequential).unwrap().1;
            rand += y_rand(&poly, &space, &mut rng).1;
        }
        assert!(sdr < rand, "{sdr} >= {rand}");
    }

    proptest! {
        #[test]
        fn real_model_is_isometric(seed in 0u64..500, bits in proptest::collection::vec(0u8..2, 8), tau in proptest::collection::vec(0usize..2, 4)) {
            for modulation in [Modulation::Psk2, Modulation::Qpsk] {
                let (p, _, _, _) = slot(seed, 15.0, modulation, 1);
                let m = p.n_users();
                let b: Vec<u8> = bits[..m * modulation.bits_per_symbol()].to_vec();
                let s: Vec<f64> = match modulation {
                    Modulation::Psk2 => b.iter().map(|&x| 1.0 - 2.0 * x as f64).collect(),
                    Modulation::Qpsk => (0..m).map(|u| 1.0 - 2.0 * b[2 * u] as f64)
                        .chain((0..m).map(|u| 1.0 - 2.0 * b[2 * u + 1] as f64)).collect(),
                };
                let delays = &tau[..m];
                let direct = p.objective(&b, &[], &one_hot_delays(delays, p.tau_max));
                let prob = SdpProblem::for_slot(&p, delays);
                prop_assert!((prob.value_at(&s) - direct).abs() < 1e-9 * (1.0 + direct));
            }
        }

        #[test]
        fn mixing_is_monotone(seed in 0u64..200) {
            let (p, _, _, _) = slot(seed, 10.0, Modulation::Qpsk, 1);
            let prob = SdpProblem::for_slot(&p, &[0, 1, 1, 0]);
            let mut last = f64::INFINITY;
            for iters in [1, 2, 4, 8, 16, 64] {
                let obj = solve_sdr(&prob, iters, 0.0).objective;
                prop_assert!(obj <= last + 1e-9);
                last = obj;
            }
        }
    }
}
