//! Channel indicators predicting the optimal rotation count, and the
//! calibration table used to pick the minimum rotation count `L_min`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{generate_instance_with_id, random_slot, CMatrix, SystemConfig};
use crate::error::{Error, Result};
use crate::gas::l_opt;
use crate::hubo::{build_hubo, Preparation, SearchSpace};
use crate::parallel::{self, Parallelism};
use crate::rng::{derive_seed, StreamTag};
use crate::thresholds::{y_mvd, MvdParams};

/// Exponent of the tie-proximity factors.
pub const BETA_EXPONENT: f64 = 0.2;

/// `||H||_F^2 / (N M)`.
pub fn indicator_c(h: &CMatrix) -> f64 {
    h.frobenius_sq() / (h.rows * h.cols) as f64
}

/// Smallest singular value above `1e-12` times the largest.
pub fn sigma_min(h: &CMatrix) -> f64 {
    let sv = h.to_nalgebra().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().copied().filter(|&s| s > 1e-12 * max).fold(f64::INFINITY, f64::min).min(max)
}

pub fn alpha(h: &CMatrix) -> f64 {
    sigma_min(h) / (3.0 * 2f64.sqrt())
}

/// `(beta1, beta2)` for one coefficient pair, or `None` when the larger
/// magnitude is zero.
pub fn beta_pair(hi: Complex64, hj: Complex64, a: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi_) = (hi, hj);
    if lo.norm() > hi_.norm() {
        std::mem::swap(&mut lo, &mut hi_);
    }
    if hi_.norm() == 0.0 {
        return None;
    }
    let ratio = lo.norm() / hi_.norm();
    let fold = |z: Complex64| z.arg().rem_euclid(FRAC_PI_2);
    let theta = (fold(lo) - fold(hi_)).abs();
    let phase = (4.0 * theta / PI - 1.0).abs();
    let b1 = ((FRAC_1_SQRT_2 - ratio) * phase).abs().powf(a);
    let b2 = 1.0 - (ratio * phase).powf(a);
    Some((b1, b2))
}

/// Independent minima of `beta1` and `beta2` over all UT pairs and all
/// receive antennas. A single UT gives `(1, 1)`.
pub fn betas(h: &CMatrix, a: f64) -> (f64, f64) {
    let mut out = (1.0f64, 1.0f64);
    for n in 0..h.rows {
        for i in 0..h.cols {
            for j in i + 1..h.cols {
                if let Some((b1, b2)) = beta_pair(h.get(n, i), h.get(n, j), a) {
                    out = (out.0.min(b1), out.1.min(b2));
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c_prime: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Indicators {
    pub fn of(h: &CMatrix) -> Self {
        let c = indicator_c(h);
        let alpha = alpha(h);
        let (beta1, beta2) = betas(h, BETA_EXPONENT);
        Self { c, c1: alpha * c, c2: beta1 * beta2 * c, c_prime: alpha * beta1 * beta2 * c, alpha, beta1, beta2 }
    }
}

pub fn indicator_c1(h: &CMatrix) -> f64 {
    Indicators::of(h).c1
}

pub fn indicator_c2(h: &CMatrix) -> f64 {
    Indicators::of(h).c2
}

pub fn indicator_c_prime(h: &CMatrix) -> f64 {
    Indicators::of(h).c_prime
}

/// Piecewise `L_min` lookup on the mean channel power.
pub fn select_lmin_conventional(c: f64) -> u64 {
    if c < 0.7 {
        5
    } else if c < 1.1 {
        6
    } else if c < 1.3 {
        8
    } else {
        12
    }
}

/// One calibration instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub indicators: Indicators,
    pub l_opt: u64,
    pub n_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    c_prime_max: f64,
    delta: f64,
    #[serde(rename = "cfg-hash")]
    cfg_hash: String,
}

/// `(C', L_opt)` pairs with the window half-width `delta = 0.01 C'_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    pub samples: Vec<(f64, u64)>,
    pub c_prime_max: f64,
    pub delta: f64,
    pub cfg_hash: String,
}

/// SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash(cfg: &SystemConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl CalibrationTable {
    pub fn new(samples: Vec<(f64, u64)>, cfg_hash: String) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("calibration table has no samples".into()));
        }
        let c_prime_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
        Ok(Self { samples, c_prime_max, delta: 0.01 * c_prime_max, cfg_hash })
    }

    /// Smallest `L_opt` among samples whose `C'` lies in
    /// `[max(0, c'-d), min(c'+d, C'_max)]`, doubling `d` from `delta` until
    /// the window is non-empty.
    pub fn select_lmin(&self, c_prime: f64) -> u64 {
        let mut d = if self.delta > 0.0 { self.delta } else { f64::MIN_POSITIVE };
        loop {
            let lo = (c_prime - d).max(0.0);
            let hi = (c_prime + d).min(self.c_prime_max);
            if let Some(l) = self.select_lmin_in_window(lo, hi) {
                return l;
            }
            d *= 2.0;
        }
    }

    /// Smallest `L_opt` among samples with `lo <= C' <= hi`.
    pub fn select_lmin_in_window(&self, lo: f64, hi: f64) -> Option<u64> {
        self.samples.iter().filter(|(c, _)| *c >= lo && *c <= hi).map(|s| s.1).min()
    }

    /// Smallest `L_opt` in the table.
    pub fn min_l_opt(&self) -> u64 {
        self.samples.iter().map(|s| s.1).min().expect("non-empty table")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "c_prime,l_opt")?;
        for (c, l) in &self.samples {
            writeln!(w, "{c:.16e},{l}")?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let s = Sidecar { c_prime_max: self.c_prime_max, delta: self.delta, cfg_hash: self.cfg_hash.clone() };
        Ok(serde_json::to_string_pretty(&s)?)
    }

    /// Writes `<path>` (CSV) and `<path>.json` (sidecar).
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        std::fs::write(sidecar_path(csv_path), self.sidecar_json()?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(csv_path)?);
        let mut lines = file.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "c_prime,l_opt" {
            return Err(Error::InvalidConfig(format!("unexpected calibration header {header:?}")));
        }
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::InvalidConfig(format!("malformed calibration row {line:?}"));
            let (c, l) = line.split_once(',').ok_or_else(bad)?;
            samples.push((c.trim().parse().map_err(|_| bad())?, l.trim().parse().map_err(|_| bad())?));
        }
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
        let mut table = Self::new(samples, side.cfg_hash)?;
        table.delta = side.delta;
        table.c_prime_max = side.c_prime_max;
        Ok(table)
    }
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Draws `n_samples` calibration instances (seeded apart from evaluation
/// instances), counts the states below `y_mvd(p)` exhaustively and records
/// `L_opt` with the instance's indicators. Instances with no state below
/// the threshold are dropped.
pub fn calibrate(
    cfg: &SystemConfig,
    n_samples: usize,
    p: f64,
    mode: Parallelism,
) -> Result<(CalibrationTable, Vec<CalibrationSample>)> {
    cfg.validate()?;
    let cal_cfg = SystemConfig { seed: derive_seed(cfg.seed, StreamTag::Calibration), ..cfg.clone() };
    let y = y_mvd(&MvdParams::from_config(cfg, p))?;
    let results = parallel::map_indexed(n_samples, mode, |i| -> Result<Option<CalibrationSample>> {
        let inst = generate_instance_with_id(&cal_cfg, i as u64)?;
        let t = i as u64;
        let slot = random_slot(&inst, t);
        let (poly, reg) = build_hubo(&inst, &slot.r, t, false)?;
        let space = SearchSpace::new(&reg, Preparation::WStateReduced)?;
        let n_s = space.iter().filter(|&x| poly.eval_assignment(x) < y).count() as u64;
        if n_s == 0 {
            return Ok(None);
        }
        let l = l_opt(n_s, space.len() as u64);
        Ok(Some(CalibrationSample { indicators: Indicators::of(&inst.h_est), l_opt: l, n_s }))
    });
    let mut samples = Vec::new();
    for r in results {
        if let Some(s) = r? {
            samples.push(s);
        }
    }
    let table =
        CalibrationTable::new(samples.iter().map(|s| (s.indicators.c_prime, s.l_opt)).collect(), config_hash(cfg))?;
    Ok((table, samples))
}

/// Mean over equal-width bins of the 90th minus 10th percentile of `L_opt`,
/// skipping bins with fewer than `min_count` samples.
pub fn binned_spread(points: &[(f64, u64)], bins: usize, min_count: usize) -> f64 {
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut groups = vec![Vec::new(); bins];
    for &(x, l) in points {
        let b = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        groups[b].push(l as f64);
    }
    let spreads: Vec<f64> = groups
        .into_iter()
        .filter(|g| g.len() >= min_count.max(1))
        .map(|mut g| {
            g.sort_by(f64::total_cmp);
            percentile(&g, 0.9) - percentile(&g, 0.1)
        })
        .collect();
    spreads.iter().sum::<f64>() / spreads.len().max(1) as f64
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}
