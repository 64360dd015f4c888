//! Overloaded random-access channel at the slot level.
//!
//! `M` single-antenna user terminals (UTs) transmit to an `N`-antenna
//! receiver. Each UT has an integer delay `tau_m` in `0..=tau_max` and a
//! frequency deviation `f_m` in `[-1, 1]`; in slot `t` the receiver sees
//!
//! ```text
//! r = H D(t) s(t) + sigma_v v + e
//! ```
//!
//! where `D(t)` folds delay and frequency deviation into one unit-modulus
//! factor per UT and `e` is the aggregate estimation error, drawn
//! `CN(0, sigma_v^2 / (T_P P_X))` per slot. The detector uses `H_est` and
//! `f_est`, which equal the true values; the mismatch lives entirely in `e`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    /// pi/2-BPSK: one bit per symbol, constellation rotated by `j^(t mod 2)`.
    #[serde(rename = "PSK2", alias = "psk2")]
    Psk2,
    #[serde(rename = "QPSK", alias = "qpsk")]
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Psk2 => 1,
            Modulation::Qpsk => 2,
        }
    }

    pub fn constellation_size(self) -> usize {
        1 << self.bits_per_symbol()
    }
}

/// Parity bit `c = t mod 2` of the pi/2-BPSK rotation.
pub fn parity(t: u64) -> u8 {
    (t % 2) as u8
}

/// pi/2-BPSK symbol `e^{j pi c / 2} (1 + j)/sqrt2 (1 - 2b)`.
pub fn psk2_symbol(b: u8, c: u8) -> Complex64 {
    let base = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2) * (1.0 - 2.0 * b as f64);
    if c & 1 == 1 {
        base * Complex64::i()
    } else {
        base
    }
}

/// QPSK symbol `((1 - 2 b1) + j (1 - 2 b2)) / sqrt2`.
pub fn qpsk_symbol(b1: u8, b2: u8) -> Complex64 {
    Complex64::new(1.0 - 2.0 * b1 as f64, 1.0 - 2.0 * b2 as f64) * FRAC_1_SQRT_2
}

/// Phase of delay hypothesis `k` (0-based) in slot `t`: `e^{j 2 pi f (t - k)}`.
pub fn delay_phase(f: f64, t: u64, k: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * f * (t as f64 - k as f64))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Receive antennas `N`.
    pub n_rx: usize,
    /// User terminals `M`.
    pub n_users: usize,
    pub tau_max: usize,
    pub modulation: Modulation,
    /// Preamble length `T_P` in slots; `null` models perfect estimation.
    pub preamble_len: Option<u32>,
    /// Payload length `T_D` in slots.
    pub payload_len: u32,
    /// Average preamble power `P_X` (linear).
    pub preamble_power: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_rx: 2,
            n_users: 4,
            tau_max: 1,
            modulation: Modulation::Psk2,
            preamble_len: Some(128),
            payload_len: 128,
            preamble_power: 1.0,
            snr_db: 20.0,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_rx == 0 {
            return bad("n_rx must be at least 1".into());
        }
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.payload_len == 0 {
            return bad("payload_len must be at least 1".into());
        }
        if self.preamble_len == Some(0) {
            return bad("preamble_len must be positive (use null for perfect estimation)".into());
        }
        if !(self.preamble_power > 0.0 && self.preamble_power.is_finite()) {
            return bad(format!("preamble_power must be positive, got {}", self.preamble_power));
        }
        if !self.snr_db.is_finite() {
            return bad(format!("snr_db must be finite, got {}", self.snr_db));
        }
        Ok(())
    }

    /// `tau_max + 1`, the number of delay hypotheses per UT.
    pub fn tau_dot(&self) -> usize {
        self.tau_max + 1
    }

    /// `sigma_v^2 = 10^(-snr_db / 10)`.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn sigma_v(&self) -> f64 {
        self.noise_var().sqrt()
    }

    /// `T_P * P_X`, or `None` for perfect estimation.
    pub fn preamble_energy(&self) -> Option<f64> {
        self.preamble_len.map(|tp| tp as f64 * self.preamble_power)
    }

    /// Variance of each entry of the aggregate estimation error.
    pub fn est_err_var(&self) -> f64 {
        match self.preamble_energy() {
            Some(e) => self.noise_var() / e,
            None => 0.0,
        }
    }

    /// Payload bits per slot: `M` for pi/2-BPSK, `2M` for QPSK.
    pub fn bits_per_slot(&self) -> usize {
        self.n_users * self.modulation.bits_per_symbol()
    }

    /// Size of the one-hot-constrained detection space.
    pub fn reduced_space_size(&self) -> u128 {
        let per_user = (self.modulation.constellation_size() * self.tau_dot()) as u128;
        per_user.pow(self.n_users as u32)
    }
}

/// Dense complex matrix, row-major. Serializes complex entries as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// One realization of channels, delays and frequency deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelInstance {
    pub seed: u64,
    pub instance_id: u64,
    pub modulation: Modulation,
    pub tau_max: usize,
    pub h_true: CMatrix,
    pub h_est: CMatrix,
    pub f_true: Vec<f64>,
    pub f_est: Vec<f64>,
    pub delays: Vec<usize>,
    pub sigma_v: f64,
    pub est_err_var: f64,
}

impl ChannelInstance {
    pub fn n_rx(&self) -> usize {
        self.h_true.rows
    }

    pub fn n_users(&self) -> usize {
        self.h_true.cols
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceivedSlot {
    pub t: u64,
    pub r: Vec<Complex64>,
    pub b_true: Vec<u8>,
}

/// Draws instance 0 of `cfg`.
pub fn generate_instance(cfg: &SystemConfig) -> Result<ChannelInstance> {
    generate_instance_with_id(cfg, 0)
}

/// Draws instance `instance_id`; distinct ids give independent channels.
pub fn generate_instance_with_id(cfg: &SystemConfig, instance_id: u64) -> Result<ChannelInstance> {
    cfg.validate()?;
    let (n, m) = (cfg.n_rx, cfg.n_users);
    let mut rng = rng::stream(cfg.seed, instance_id, 0, StreamTag::Channel);
    let mut h = CMatrix::zeros(n, m);
    for z in h.data.iter_mut() {
        *z = complex_normal(&mut rng);
    }
    let delays: Vec<usize> = (0..m).map(|_| rng.random_range(0..=cfg.tau_max)).collect();
    let f: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(ChannelInstance {
        seed: cfg.seed,
        instance_id,
        modulation: cfg.modulation,
        tau_max: cfg.tau_max,
        h_est: h.clone(),
        h_true: h,
        f_est: f.clone(),
        f_true: f,
        delays,
        sigma_v: cfg.sigma_v(),
        est_err_var: cfg.est_err_var(),
    })
}

/// Uniform payload bits for slot `t`, in per-UT order (`b_m1, b_m2` for QPSK).
pub fn payload_bits(inst: &ChannelInstance, t: u64) -> Vec<u8> {
    let mut rng = rng::stream(inst.seed, inst.instance_id, t, StreamTag::PayloadBits);
    let count = inst.n_users() * inst.modulation.bits_per_symbol();
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

/// Regenerates `sigma_v v(t)` and `e(t)` for slot `t`.
pub fn slot_impairments(inst: &ChannelInstance, t: u64) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = inst.n_rx();
    let mut noise_rng = rng::stream(inst.seed, inst.instance_id, t, StreamTag::Noise);
    let mut err_rng = rng::stream(inst.seed, inst.instance_id, t, StreamTag::EstimationError);
    let err_sd = inst.est_err_var.sqrt();
    let noise = (0..n).map(|_| complex_normal(&mut noise_rng) * inst.sigma_v).collect();
    let err = (0..n).map(|_| complex_normal(&mut err_rng) * err_sd).collect();
    (noise, err)
}

fn symbols(modulation: Modulation, bits: &[u8], t: u64) -> Vec<Complex64> {
    match modulation {
        Modulation::Psk2 => bits.iter().map(|&b| psk2_symbol(b, parity(t))).collect(),
        Modulation::Qpsk => bits.chunks_exact(2).map(|p| qpsk_symbol(p[0], p[1])).collect(),
    }
}

/// Received vector of slot `t` for payload `b_true`, using the true channel.
pub fn received_slot(inst: &ChannelInstance, t: u64, b_true: &[u8]) -> Result<ReceivedSlot> {
    let (n, m) = (inst.n_rx(), inst.n_users());
    let expected = m * inst.modulation.bits_per_symbol();
    if b_true.len() != expected {
        return Err(Error::LengthMismatch { expected, got: b_true.len() });
    }
    if let Some(&b) = b_true.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidConfig(format!("payload bit {b} is not binary")));
    }
    let s = symbols(inst.modulation, b_true, t);
    let (noise, err) = slot_impairments(inst, t);
    let r = (0..n)
        .map(|row| {
            let signal: Complex64 =
                (0..m).map(|u| inst.h_true.get(row, u) * delay_phase(inst.f_true[u], t, inst.delays[u]) * s[u]).sum();
            signal + noise[row] + err[row]
        })
        .collect();
    Ok(ReceivedSlot { t, r, b_true: b_true.to_vec() })
}

/// Draws the payload of slot `t` and returns the received slot.
pub fn random_slot(inst: &ChannelInstance, t: u64) -> ReceivedSlot {
    let bits = payload_bits(inst, t);
    received_slot(inst, t, &bits).expect("payload length matches by construction")
}

/// Detection-side view of one slot: estimated channel, received vector and
/// slot index. All objective evaluations go through this type.
#[derive(Clone, Debug)]
pub struct SlotProblem {
    pub h: CMatrix,
    pub f: Vec<f64>,
    pub r: Vec<Complex64>,
    pub t: u64,
    pub modulation: Modulation,
    pub tau_max: usize,
    pub noise_var: f64,
}

impl SlotProblem {
    pub fn new(inst: &ChannelInstance, r: &[Complex64], t: u64) -> Self {
        Self {
            h: inst.h_est.clone(),
            f: inst.f_est.clone(),
            r: r.to_vec(),
            t,
            modulation: inst.modulation,
            tau_max: inst.tau_max,
            noise_var: inst.sigma_v * inst.sigma_v,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.h.rows
    }

    pub fn n_users(&self) -> usize {
        self.h.cols
    }

    pub fn tau_dot(&self) -> usize {
        self.tau_max + 1
    }

    /// Symbol of UT `m` given its payload bits and parity bit.
    pub fn symbol(&self, bits: &[u8], c: u8) -> Complex64 {
        match self.modulation {
            Modulation::Psk2 => psk2_symbol(bits[0], c),
            Modulation::Qpsk => qpsk_symbol(bits[0], bits[1]),
        }
    }

    /// Literal `D_m = sum_k e^{j 2 (t - k + 1) pi f_m} d_mk`, valid for any
    /// (including non-one-hot) delay bits.
    pub fn delay_factor(&self, m: usize, d: &[u8]) -> Complex64 {
        d.iter().enumerate().filter(|(_, &bit)| bit == 1).map(|(k, _)| delay_phase(self.f[m], self.t, k)).sum()
    }

    /// Received-space contribution `h_m D_m s_m` of UT `m`.
    pub fn contribution(&self, m: usize, bits: &[u8], c: u8, d: &[u8]) -> Vec<Complex64> {
        let x = self.delay_factor(m, d) * self.symbol(bits, c);
        (0..self.n_rx()).map(|n| self.h.get(n, m) * x).collect()
    }

    /// `||r - H D s||^2` for payload bits `b` (per-UT order), parity bits `c`
    /// (ignored for QPSK; may be empty, in which case `t mod 2` is used) and
    /// delay bits `d` (`M (tau_max+1)` entries, UT-major).
    pub fn objective(&self, b: &[u8], c: &[u8], d: &[u8]) -> f64 {
        let bps = self.modulation.bits_per_symbol();
        let td = self.tau_dot();
        let mut resid = self.r.clone();
        for m in 0..self.n_users() {
            let cm = c.get(m).copied().unwrap_or_else(|| parity(self.t));
            let contrib = self.contribution(m, &b[m * bps..(m + 1) * bps], cm, &d[m * td..(m + 1) * td]);
            for (z, x) in resid.iter_mut().zip(contrib) {
                *z -= x;
            }
        }
        resid.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Squared residual of hypothesis `(b, c, d)` against `r` with the estimated
/// channel of `inst`.
pub fn objective_direct(inst: &ChannelInstance, r: &[Complex64], t: u64, b: &[u8], d: &[u8], c: &[u8]) -> f64 {
    SlotProblem::new(inst, r, t).objective(b, c, d)
}

/// One-hot delay bits encoding `delays`.
pub fn one_hot_delays(delays: &[usize], tau_max: usize) -> Vec<u8> {
    let td = tau_max + 1;
    let mut d = vec![0u8; delays.len() * td];
    for (m, &tau) in delays.iter().enumerate() {
        d[m * td + tau] = 1;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    fn unit_instance(f: f64, tau: usize, tau_max: usize) -> ChannelInstance {
        let h = CMatrix::from_rows(&[vec![Complex64::new(1.0, 0.0)]]);
        ChannelInstance {
            seed: 1,
            instance_id: 0,
            modulation: Modulation::Psk2,
            tau_max,
            h_est: h.clone(),
            h_true: h,
            f_true: vec![f],
            f_est: vec![f],
            delays: vec![tau],
            sigma_v: 0.0,
            est_err_var: 0.0,
        }
    }

    #[test]
    fn delays_stay_in_range() {
        let cfg = SystemConfig { n_rx: 2, n_users: 4, tau_max: 1, seed: 99, ..Default::default() };
        for id in 0..50 {
            let inst = generate_instance_with_id(&cfg, id).unwrap();
            assert!(inst.delays.iter().all(|&d| d <= 1));
            assert!(inst.f_true.iter().all(|f| (-1.0..=1.0).contains(f)));
        }
    }

    #[test]
    fn noise_and_error_variances() {
        let cfg = SystemConfig { snr_db: 20.0, preamble_len: Some(128), preamble_power: 1.0, ..Default::default() };
        assert!(close(cfg.sigma_v(), 0.1, 1e-12));
        assert!(close(cfg.est_err_var(), 7.8125e-5, 1e-12));
        let ideal = SystemConfig { preamble_len: None, ..cfg };
        assert_eq!(ideal.est_err_var(), 0.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SystemConfig { n_rx: 0, ..Default::default() },
            SystemConfig { n_users: 0, ..Default::default() },
            SystemConfig { payload_len: 0, ..Default::default() },
            SystemConfig { preamble_len: Some(0), ..Default::default() },
            SystemConfig { preamble_power: 0.0, ..Default::default() },
            SystemConfig { snr_db: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(generate_instance(&cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn noiseless_symbol_examples() {
        let inst = unit_instance(0.0, 0, 0);
        let s = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        let slot = received_slot(&inst, 0, &[0]).unwrap();
        assert!((slot.r[0] - s).norm() < 1e-15);
        let slot = received_slot(&inst, 0, &[1]).unwrap();
        assert!((slot.r[0] + s).norm() < 1e-15);
    }

    #[test]
    fn delay_and_frequency_cancel_in_slot_one() {
        // exponent t + 1 - k with t = 1 and one-hot k = tau + 1 = 2 is zero
        let inst = unit_instance(0.25, 1, 1);
        let slot = received_slot(&inst, 1, &[0]).unwrap();
        assert!((slot.r[0] - psk2_symbol(0, 1)).norm() < 1e-15);
    }

    #[test]
    fn bad_payload_length_rejected() {
        let inst = unit_instance(0.0, 0, 0);
        assert!(matches!(received_slot(&inst, 0, &[0, 1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn slots_reproducible() {
        let cfg = SystemConfig { seed: 5, ..Default::default() };
        let inst = generate_instance_with_id(&cfg, 3).unwrap();
        let a = random_slot(&inst, 17);
        let b = random_slot(&inst, 17);
        assert_eq!(a, b);
        assert_ne!(a, random_slot(&inst, 18));
    }

    #[test]
    fn objective_zero_at_truth_without_impairments() {
        let cfg = SystemConfig { seed: 11, preamble_len: None, snr_db: 300.0, ..Default::default() };
        let mut inst = generate_instance(&cfg).unwrap();
        inst.sigma_v = 0.0;
        let slot = random_slot(&inst, 4);
        let d = one_hot_delays(&inst.delays, inst.tau_max);
        let e = objective_direct(&inst, &slot.r, 4, &slot.b_true, &d, &[]);
        assert!(e < 1e-24, "{e}");
    }

    #[test]
    fn all_zero_delay_bits_leave_received_energy() {
        let cfg = SystemConfig { seed: 2, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 0);
        let d = vec![0u8; cfg.n_users * cfg.tau_dot()];
        let e = objective_direct(&inst, &slot.r, 0, &slot.b_true, &d, &[]);
        let energy: f64 = slot.r.iter().map(|z| z.norm_sqr()).sum();
        assert!(close(e, energy, 1e-14));
    }

    #[test]
    fn objective_matches_explicit_matrix_product() {
        let cfg = SystemConfig {
            n_rx: 3,
            n_users: 3,
            tau_max: 2,
            modulation: Modulation::Qpsk,
            seed: 8,
            ..Default::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 5);
        let b = [1, 0, 0, 1, 1, 1];
        let d = [0, 1, 1, 0, 0, 0, 0, 0, 1];
        // explicit H * diag(D) * s with D from the exponent form where one-hot
        let s = [qpsk_symbol(1, 0), qpsk_symbol(0, 1), qpsk_symbol(1, 1)];
        let dd = [
            delay_phase(inst.f_est[0], 5, 1) + delay_phase(inst.f_est[0], 5, 2),
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(1.0, 2.0 * PI * inst.f_est[2] * (5.0 + 1.0 - 3.0)),
        ];
        let mut expected = 0.0;
        for n in 0..3 {
            let mut acc = slot.r[n];
            for m in 0..3 {
                acc -= inst.h_est.get(n, m) * dd[m] * s[m];
            }
            expected += acc.norm_sqr();
        }
        let got = objective_direct(&inst, &slot.r, 5, &b, &d, &[]);
        assert!(close(got, expected, 1e-12));
    }

    #[test]
    fn minimum_equals_impairment_energy() {
        let cfg = SystemConfig { seed: 21, snr_db: 10.0, preamble_len: Some(4), ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 9);
        let d = one_hot_delays(&inst.delays, inst.tau_max);
        let e = objective_direct(&inst, &slot.r, 9, &slot.b_true, &d, &[]);
        let (v, err) = slot_impairments(&inst, 9);
        let expected: f64 = v.iter().zip(&err).map(|(a, b)| (a + b).norm_sqr()).sum();
        assert!(close(e, expected, 1e-12));
    }

    #[test]
    fn antenna_permutation_invariance() {
        let cfg = SystemConfig { n_rx: 3, seed: 4, ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        let slot = random_slot(&inst, 2);
        let d = vec![1, 0, 0, 1, 1, 0, 0, 1];
        let b = [0, 1, 1, 0];
        let e = objective_direct(&inst, &slot.r, 2, &b, &d, &[]);
        let perm = [2, 0, 1];
        let mut p = inst.clone();
        for (dst, &src) in perm.iter().enumerate() {
            for m in 0..cfg.n_users {
                p.h_est.set(dst, m, inst.h_est.get(src, m));
            }
        }
        let r: Vec<_> = perm.iter().map(|&s| slot.r[s]).collect();
        assert!(close(objective_direct(&p, &r, 2, &b, &d, &[]), e, 1e-12));
    }

    #[test]
    fn instance_json_uses_pairs() {
        let inst = generate_instance(&SystemConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        let first = &v["h_true"]["data"][0];
        assert!(first.is_array() && first.as_array().unwrap().len() == 2);
        let back: ChannelInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, inst);
    }
}
