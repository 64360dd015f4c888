use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::StateVector;
use crate::channel::SlotProblem;
use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, Preparation};
use crate::parallel;

/// Largest value register `choose_qv` will return.
pub const MAX_QV: usize = 24;

fn check_range(q_v: usize, lo: f64, hi: f64) -> Result<()> {
    let half = (1u64 << (q_v - 1)) as f64;
    if -half <= lo && hi < half {
        Ok(())
    } else {
        Err(Error::ValueRange { q_v, lo, hi })
    }
}

/// `E(x) - y` for every key with support in `sv`.
fn supported_values(sv: &StateVector, poly: &HuboPolynomial, y: f64) -> Result<Vec<Option<f64>>> {
    if poly.n_vars() != sv.q_k() {
        return Err(Error::LengthMismatch { expected: sv.q_k(), got: poly.n_vars() });
    }
    let vals = parallel::map_chunks(sv.amplitudes(), sv.value_dim(), sv.parallelism(), |k, c| {
        c.iter().any(|a| *a != Complex64::default()).then(|| poly.eval_assignment(Assignment(k as u64)) - y)
    });
    let (lo, hi) = vals.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &e| (l.min(e), h.max(e)));
    if lo <= hi {
        check_range(sv.q_v(), lo, hi)?;
    }
    Ok(vals)
}

fn planner(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = FftPlanner::new();
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn phase_ramp(chunk: &mut [Complex64], value: f64, sign: f64) {
    let n = chunk.len() as f64;
    for (v, a) in chunk.iter_mut().enumerate() {
        *a *= Complex64::from_polar(1.0, sign * 2.0 * PI * v as f64 * value / n);
    }
}

fn transform(chunk: &mut [Complex64], fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(chunk, &mut scratch);
    let s = 1.0 / (chunk.len() as f64).sqrt();
    chunk.iter_mut().for_each(|a| *a *= s);
}

/// Applies every controlled `U_G` block and the inverse QFT to the value
/// register. Fails when some supported key has `E(x) - y` outside the
/// two's-complement range of `q_v` bits.
pub fn apply_objective_encoding(sv: &mut StateVector, poly: &HuboPolynomial, y: f64) -> Result<()> {
    let vals = supported_values(sv, poly, y)?;
    let fft = planner(sv.value_dim(), false);
    let n = sv.value_dim();
    let mode = sv.parallelism();
    parallel::for_each_chunk_mut(sv.amplitudes_mut(), n, mode, |k, c| {
        if let Some(e) = vals[k] {
            phase_ramp(c, e, 1.0);
            transform(c, fft.as_ref());
        }
    });
    Ok(())
}

/// Inverse of [`apply_objective_encoding`]: QFT, then the conjugate phases.
pub fn invert_objective_encoding(sv: &mut StateVector, poly: &HuboPolynomial, y: f64) {
    let fft = planner(sv.value_dim(), true);
    let n = sv.value_dim();
    let mode = sv.parallelism();
    parallel::for_each_chunk_mut(sv.amplitudes_mut(), n, mode, |k, c| {
        let e = poly.eval_assignment(Assignment(k as u64)) - y;
        transform(c, fft.as_ref());
        phase_ramp(c, e, -1.0);
    });
}

/// Gate-by-gate version of [`apply_objective_encoding`]: one controlled
/// phase block per monomial, one uncontrolled block for `constant - y`.
pub fn apply_objective_encoding_literal(sv: &mut StateVector, poly: &HuboPolynomial, y: f64) -> Result<()> {
    supported_values(sv, poly, y)?;
    let n = sv.value_dim();
    let mode = sv.parallelism();
    parallel::for_each_chunk_mut(sv.amplitudes_mut(), n, mode, |_, c| phase_ramp(c, poly.constant() - y, 1.0));
    for t in poly.terms() {
        parallel::for_each_chunk_mut(sv.amplitudes_mut(), n, mode, |k, c| {
            if (k as u64) & t.mask == t.mask {
                phase_ramp(c, t.coeff, 1.0);
            }
        });
    }
    let fft = planner(n, false);
    parallel::for_each_chunk_mut(sv.amplitudes_mut(), n, mode, |_, c| transform(c, fft.as_ref()));
    Ok(())
}

/// Smallest `q_v` with `-2^(q_v-1) <= lo` and `hi < 2^(q_v-1)`.
pub fn choose_qv(lo: f64, hi: f64) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::ValueRange { q_v: 0, lo, hi });
    }
    (1..=MAX_QV).find(|&q| check_range(q, lo, hi).is_ok()).ok_or(Error::ValueRange { q_v: MAX_QV, lo, hi })
}

/// Analytic upper bound on the objective over the states a preparation can
/// reach: `sum_n (|r_n| + sum_m |h_nm| B_m)^2`, where `B_m` bounds `|D_m|`.
pub fn mimo_value_bound(p: &SlotProblem, prep: Preparation) -> f64 {
    let b = match prep {
        Preparation::WStateReduced => 1.0,
        Preparation::HadamardFull => p.tau_dot() as f64,
    };
    (0..p.n_rx())
        .map(|n| {
            let s = p.r[n].norm() + (0..p.n_users()).map(|m| p.h.get(n, m).norm() * b).sum::<f64>();
            s * s
        })
        .sum()
}

pub fn choose_qv_for_slot(p: &SlotProblem, y: f64, prep: Preparation) -> Result<usize> {
    choose_qv(-y, mimo_value_bound(p, prep) - y)
}

/// Uses the coefficient-sign interval of `poly`.
pub fn choose_qv_for_polynomial(poly: &HuboPolynomial, y: f64) -> Result<usize> {
    let (lo, hi) = poly.value_bounds();
    choose_qv(lo - y, hi - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_instance, random_slot, SystemConfig};
    use crate::hubo::{build_hubo, SearchSpace, VarRegistry};
    use crate::parallel::Parallelism;
    use crate::statevector::prepare_initial;

    #[test]
    fn choose_qv_examples() {
        assert_eq!(choose_qv(-3.2, 3.2).unwrap(), 3);
        assert_eq!(choose_qv(0.0, 4.0).unwrap(), 4);
        assert_eq!(choose_qv(-4.0, 3.9).unwrap(), 3);
        assert_eq!(choose_qv(-0.1, 0.0).unwrap(), 1);
        assert!(choose_qv(0.0, f64::NAN).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        let reg = VarRegistry::generic(1).unwrap();
        let poly = HuboPolynomial::from_terms(1, 0.0, [(&[0][..], 5.0)]).unwrap();
        let mut sv = prepare_initial(&reg, Preparation::HadamardFull, 3).unwrap();
        assert!(matches!(apply_objective_encoding(&mut sv, &poly, 0.0), Err(Error::ValueRange { .. })));
    }

    #[test]
    fn literal_matches_fused() {
        let reg = VarRegistry::generic(4).unwrap();
        let poly = HuboPolynomial::from_terms(4, 0.7, [(&[0][..], 1.25), (&[1, 3][..], -2.5), (&[0, 2, 3][..], 0.375)])
            .unwrap();
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            let base = prepare_initial(&reg, Preparation::HadamardFull, 5).unwrap().with_parallelism(mode);
            let (mut a, mut b) = (base.clone(), base);
            apply_objective_encoding(&mut a, &poly, 0.4).unwrap();
            apply_objective_encoding_literal(&mut b, &poly, 0.4).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_bound_dominates_reduced_space() {
        for seed in 0..100 {
            let cfg = SystemConfig { n_rx: 2, n_users: 2, tau_max: 1, seed, snr_db: 5.0, ..Default::default() };
            let inst = generate_instance(&cfg).unwrap();
            let slot = random_slot(&inst, seed);
            let (poly, reg) = build_hubo(&inst, &slot.r, slot.t, false).unwrap();
            let p = SlotProblem::new(&inst, &slot.r, slot.t);
            let bound = mimo_value_bound(&p, Preparation::WStateReduced);
            let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
            let max = space.iter().map(|x| poly.eval_assignment(x)).fold(0.0, f64::max);
            assert!(max <= bound + 1e-9);
            let full = mimo_value_bound(&p, Preparation::HadamardFull);
            let max_full = (0..1u64 << reg.len()).map(|x| poly.eval_assignment(Assignment(x))).fold(0.0, f64::max);
            assert!(max_full <= full + 1e-9);
        }
    }
}
