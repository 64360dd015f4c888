//! Grover adaptive search.
//!
//! [`run_gas`] is the classical outer loop shared by the baseline and the
//! improved variant (threshold initialisation, minimum rotation count and
//! restarts are all carried by [`GasStart`]). The quantum step is delegated
//! to a [`Backend`]: either a full statevector simulation or the ideal
//! rotation-law sampler.

mod backend;
mod theory;

pub use backend::{AmplitudeBackend, Backend, CircuitBackend, MAX_AMPLITUDE_SPACE};
pub use theory::{l_opt, restart_iterations, success_probability};

use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, SearchSpace, VarRegistry};

/// Default growth factor of `k`.
pub const DEFAULT_LAMBDA: f64 = 8.0 / 7.0;

/// How the initial threshold `y_0` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Objective value of a uniformly random candidate.
    Random,
    /// Gamma-quantile threshold with exceedance probability `p`.
    Mvd { p: f64 },
    /// Best quantized linear-MMSE estimate.
    Mmse,
    /// Best semidefinite-relaxation estimate.
    Sdr,
}

/// How the minimum rotation count is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LminPolicy {
    Zero,
    /// Table lookup on the mean channel power.
    ConventionalC,
    /// Calibration lookup on the combined channel indicator.
    ProposedCPrime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    CircuitLevel,
    AmplitudeLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasParams {
    pub lambda: f64,
    pub threshold_policy: ThresholdPolicy,
    pub lmin_policy: LminPolicy,
    pub backend: BackendKind,
    pub budget_rotations: u64,
    pub budget_iterations: u64,
    pub restart_enabled: bool,
    /// Stop as soon as the known optimum is accepted.
    pub stop_at_optimum: bool,
}

impl GasParams {
    /// Baseline settings with budgets `10 sqrt(nt)` iterations and
    /// `50 sqrt(nt)` rotations.
    pub fn for_space(nt: u64) -> Self {
        let s = (nt as f64).sqrt();
        Self {
            lambda: DEFAULT_LAMBDA,
            threshold_policy: ThresholdPolicy::Random,
            lmin_policy: LminPolicy::Zero,
            backend: BackendKind::AmplitudeLevel,
            budget_rotations: (50.0 * s).ceil() as u64,
            budget_iterations: (10.0 * s).ceil() as u64,
            restart_enabled: false,
            stop_at_optimum: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0 && self.lambda < 4.0 / 3.0) {
            return Err(Error::InvalidConfig(format!("lambda = {} must lie in (1, 4/3)", self.lambda)));
        }
        if let ThresholdPolicy::Mvd { p } = self.threshold_policy {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!("exceedance probability {p} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Resolved starting point of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct GasStart {
    pub y0: f64,
    /// Candidate holding `y0`, when the threshold came from one.
    pub x0: Option<Assignment>,
    pub l_min: u64,
    /// Restart once this many iterations since the (re)start brought no update.
    pub restart_after: Option<u64>,
}

/// Known optimum of the searched space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub x: Assignment,
}

impl Optimum {
    /// Ties count as reaching the optimum.
    pub fn is_reached_by(&self, e: f64) -> bool {
        e <= self.value + 1e-9 * (1.0 + self.value.abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasRecord {
    pub i: u64,
    pub y: f64,
    #[serde(rename = "L")]
    pub l: u64,
    pub k: f64,
    pub x: String,
    #[serde(rename = "Ex")]
    pub ex: f64,
    pub accepted: bool,
    pub cum_rot: u64,
    pub restart: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GasTrace {
    pub records: Vec<GasRecord>,
    pub final_x: Option<Assignment>,
    pub final_y: f64,
    /// `(CD queries, QD rotations)` at the first acceptance of an optimum.
    pub reached_optimum_at: Option<(u64, u64)>,
    /// Lowest-valued assignment seen that lies in the reduced space.
    pub best_valid: Option<(Assignment, f64)>,
    pub cd_queries: u64,
    pub qd_rotations: u64,
    pub restarts: u64,
}

impl GasTrace {
    /// Final answer, falling back to the best valid assignment when the
    /// accepted one is not decodable.
    pub fn detection_output(&self, reg: &VarRegistry) -> Option<Assignment> {
        match self.final_x {
            Some(x) if reg.is_one_hot(x) => Some(x),
            _ => self.best_valid.map(|(x, _)| x),
        }
    }

    /// True when the final accepted assignment has an invalid delay block.
    pub fn flagged_invalid(&self, reg: &VarRegistry) -> bool {
        self.final_x.is_some_and(|x| !reg.is_one_hot(x))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs the adaptive search loop.
///
/// Each iteration draws `L` uniformly from `{l_min, ..., l_min + ceil(k-1)}`,
/// measures a candidate with `L` rotations and accepts it when
/// `E(x) < y`. Runs stop at the iteration or rotation budget (an iteration
/// whose `L` would overrun the rotation budget is not started), or at the
/// optimum when `params.stop_at_optimum` is set.
#[allow(clippy::too_many_arguments)]
pub fn run_gas(
    poly: &HuboPolynomial,
    reg: &VarRegistry,
    space: &SearchSpace,
    params: &GasParams,
    start: &GasStart,
    backend: &mut dyn Backend,
    rng: &mut dyn RngCore,
    optimum: Option<Optimum>,
) -> Result<GasTrace> {
    params.validate()?;
    let n = reg.len();
    let k_cap = 2f64.powf(n as f64 / 2.0);
    let mut y = start.y0;
    let mut x = start.x0;
    let mut l_min = start.l_min;
    let mut k = 1.0f64;
    // Iterations since the (re)start, and whether any update happened in them.
    let mut since_start = 0u64;
    let mut updated = false;
    let mut cum_rot = 0u64;
    let mut records = Vec::new();
    let mut restarts = 0;
    let mut best_valid: Option<(Assignment, f64)> = None;
    let note_valid = |x: Assignment, e: f64, best: &mut Option<(Assignment, f64)>| {
        if reg.is_one_hot(x) && best.is_none_or(|(_, b)| e < b) {
            *best = Some((x, e));
        }
    };
    if let Some(x0) = x {
        note_valid(x0, y, &mut best_valid);
    }
    let mut reached = match (x, optimum) {
        (Some(_), Some(opt)) if opt.is_reached_by(y) => Some((0, 0)),
        _ => None,
    };

    for i in 1..=params.budget_iterations {
        if reached.is_some() && params.stop_at_optimum {
            break;
        }
        let width = (k - 1.0).ceil() as u64;
        let l = l_min + rng.random_range(0..=width);
        if cum_rot + l > params.budget_rotations {
            break;
        }
        let k_used = k;
        let y_used = y;
        let cand = backend.sample(y, l, rng)?;
        let e = poly.eval_assignment(cand);
        cum_rot += l;
        note_valid(cand, e, &mut best_valid);
        let accepted = e < y;
        if accepted {
            x = Some(cand);
            y = e;
            k = 1.0;
            updated = true;
            if reached.is_none() && optimum.is_some_and(|o| o.is_reached_by(e)) {
                reached = Some((i, cum_rot));
            }
        } else {
            k = (params.lambda * k).min(k_cap);
        }
        since_start += 1;
        let mut restart = false;
        if let Some(limit) = start.restart_after.filter(|_| params.restart_enabled) {
            if since_start >= limit && !updated {
                let fresh = space.get(rng.random_range(0..space.len()));
                x = Some(fresh);
                y = poly.eval_assignment(fresh);
                l_min = 0;
                k = 1.0;
                since_start = 0;
                restart = true;
                restarts += 1;
                note_valid(fresh, y, &mut best_valid);
                if reached.is_none() && optimum.is_some_and(|o| o.is_reached_by(y)) {
                    reached = Some((i, cum_rot));
                }
            }
        }
        records.push(GasRecord {
            i,
            y: y_used,
            l,
            k: k_used,
            x: cand.to_bitstring(n),
            ex: e,
            accepted,
            cum_rot,
            restart,
        });
    }

    Ok(GasTrace {
        cd_queries: records.len() as u64,
        qd_rotations: cum_rot,
        records,
        final_x: x,
        final_y: y,
        reached_optimum_at: reached,
        best_valid,
        restarts,
    })
}
