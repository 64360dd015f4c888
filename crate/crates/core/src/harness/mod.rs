//! Batch experiments: query-complexity distributions, BER sweeps,
//! indicator calibration and gate-count reports.
//!
//! Every trial draws its instance, payload, threshold and search randomness
//! from streams keyed by `(seed, trial, slot)`, so results do not depend on
//! how trials are scheduled across threads. All search variants of a trial
//! share the same search stream.

mod config;
mod output;

pub use config::{CalibrationSettings, Detector, ExperimentSpec, GasSettings, GasVariant, GateCase};
pub use output::{write_ber_csv, write_query_csv, write_scatter_csv};

use crate::baselines::{exhaustive_mld, y_sdr};
use crate::channel::{
    generate_instance_with_id, random_slot, ChannelInstance, ReceivedSlot, SlotProblem, SystemConfig,
};
use crate::error::{Error, Result};
use crate::gas::{
    restart_iterations, run_gas, AmplitudeBackend, Backend, BackendKind, CircuitBackend, GasParams, GasStart, GasTrace,
    LminPolicy, Optimum, ThresholdPolicy,
};
use crate::gates::{gate_count_report, GateCountReport};
use crate::hubo::{build_hubo, HuboPolynomial, Preparation, SearchSpace, VarRegistry};
use crate::indicators::{
    binned_spread, calibrate, indicator_c, indicator_c_prime, select_lmin_conventional, CalibrationSample,
    CalibrationTable,
};
use crate::parallel::{self, Parallelism};
use crate::rng::{self, StreamTag};
use crate::statevector::{choose_qv, mimo_value_bound};
use crate::thresholds::{y_mmse, y_mvd, y_rand, MvdParams};

/// Largest `q_k + q_v` for which the circuit backend is chosen automatically.
pub const AUTO_CIRCUIT_QUBITS: usize = 22;

/// Search space and optimum of one slot under one preparation.
pub struct Prepared {
    pub prep: Preparation,
    pub space: SearchSpace,
    pub optimum: Optimum,
    amplitude: Option<AmplitudeBackend>,
}

impl Prepared {
    pub fn new(poly: &HuboPolynomial, reg: &VarRegistry, prep: Preparation, mode: Parallelism) -> Result<Self> {
        let space = SearchSpace::new(reg, prep)?;
        match AmplitudeBackend::new(poly, &space, mode) {
            Ok(amp) => {
                let (value, x) = amp.minimum();
                Ok(Self { prep, space, optimum: Optimum { value, x }, amplitude: Some(amp) })
            }
            Err(e) if e.is_capacity() => {
                let mld = exhaustive_mld(poly, &space, mode)?;
                Ok(Self { prep, space, optimum: Optimum { value: mld.min, x: mld.argmin }, amplitude: None })
            }
            Err(e) => Err(e),
        }
    }
}

/// One detection problem: instance, received slot and its polynomial.
pub struct Slot<'a> {
    pub cfg: &'a SystemConfig,
    pub inst: &'a ChannelInstance,
    pub rx: &'a ReceivedSlot,
    pub poly: HuboPolynomial,
    pub reg: VarRegistry,
}

impl<'a> Slot<'a> {
    pub fn new(cfg: &'a SystemConfig, inst: &'a ChannelInstance, rx: &'a ReceivedSlot) -> Result<Self> {
        let (poly, reg) = build_hubo(inst, &rx.r, rx.t, false)?;
        Ok(Self { cfg, inst, rx, poly, reg })
    }

    pub fn problem(&self) -> SlotProblem {
        SlotProblem::new(self.inst, &self.rx.r, self.rx.t)
    }

    fn stream(&self, tag: StreamTag) -> rand_chacha::ChaCha8Rng {
        rng::stream(self.cfg.seed, self.inst.instance_id, self.rx.t, tag)
    }
}

/// Outcome of one search run.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub trace: GasTrace,
    pub start: GasStart,
    pub backend: BackendKind,
    pub q_v: Option<usize>,
    pub space_size: u64,
}

impl VariantRun {
    /// `(CD, QD)` queries: up to the first optimum hit when converged,
    /// otherwise everything spent.
    pub fn queries(&self) -> (u64, u64) {
        self.trace.reached_optimum_at.unwrap_or((self.trace.cd_queries, self.trace.qd_rotations))
    }

    pub fn converged(&self) -> bool {
        self.trace.reached_optimum_at.is_some()
    }
}

/// Resolves the threshold, minimum rotation count and restart bound of a
/// variant for `slot`.
pub fn resolve_start(
    slot: &Slot,
    variant: &GasVariant,
    space: &SearchSpace,
    table: Option<&CalibrationTable>,
    mode: Parallelism,
) -> Result<GasStart> {
    let need_table =
        || table.ok_or_else(|| Error::InvalidConfig(format!("variant {} needs a calibration table", variant.name)));
    let (y0, x0) = match variant.threshold {
        ThresholdPolicy::Random => {
            let (x, v) = y_rand(&slot.poly, space, &mut slot.stream(StreamTag::Threshold));
            (v, Some(x))
        }
        ThresholdPolicy::Mvd { p } => (y_mvd(&MvdParams::from_config(slot.cfg, p))?, None),
        ThresholdPolicy::Mmse => {
            let (x, v) = y_mmse(&slot.problem(), &slot.reg)?;
            (v, Some(x))
        }
        ThresholdPolicy::Sdr => {
            let (x, v) = y_sdr(&slot.problem(), &slot.reg, mode)?;
            (v, Some(x))
        }
    };
    let l_min = match variant.lmin {
        LminPolicy::Zero => 0,
        LminPolicy::ConventionalC => select_lmin_conventional(indicator_c(&slot.inst.h_est)),
        LminPolicy::ProposedCPrime => need_table()?.select_lmin(indicator_c_prime(&slot.inst.h_est)),
    };
    let restart_after = if variant.restart {
        let reference = table.map(CalibrationTable::min_l_opt).unwrap_or(l_min);
        Some(restart_iterations(reference, space.len() as u64, 1))
    } else {
        None
    };
    Ok(GasStart { y0, x0, l_min, restart_after })
}

fn gas_params(settings: &GasSettings, variant: &GasVariant, nt: u64, backend: BackendKind, stop: bool) -> GasParams {
    let base = GasParams::for_space(nt);
    GasParams {
        lambda: settings.lambda,
        threshold_policy: variant.threshold,
        lmin_policy: variant.lmin,
        backend,
        budget_rotations: settings.budget_rotations.unwrap_or(base.budget_rotations),
        budget_iterations: settings.budget_iterations.unwrap_or(base.budget_iterations),
        restart_enabled: variant.restart,
        stop_at_optimum: stop,
    }
}

/// Value-register width covering every `E(x) - y` the run can encode.
pub fn circuit_qv(slot: &Slot, prep: Preparation, y0: f64) -> Result<usize> {
    let bound = mimo_value_bound(&slot.problem(), prep);
    choose_qv(-y0.max(bound), bound)
}

/// Runs one variant on `slot`. With `stop_at_optimum` the run ends at the
/// first acceptance of the known optimum.
pub fn run_variant(
    slot: &Slot,
    prepared: &Prepared,
    variant: &GasVariant,
    settings: &GasSettings,
    table: Option<&CalibrationTable>,
    stop_at_optimum: bool,
    mode: Parallelism,
) -> Result<VariantRun> {
    let start = resolve_start(slot, variant, &prepared.space, table, mode)?;
    let nt = prepared.space.len() as u64;
    let q_v = match settings.q_v {
        Some(q) => q,
        None => circuit_qv(slot, prepared.prep, start.y0)?,
    };
    let kind = settings.backend.unwrap_or(if slot.reg.len() + q_v <= AUTO_CIRCUIT_QUBITS {
        BackendKind::CircuitLevel
    } else {
        BackendKind::AmplitudeLevel
    });
    let params = gas_params(settings, variant, nt, kind, stop_at_optimum);
    let mut rng = slot.stream(StreamTag::Search);
    let run = |backend: &mut dyn Backend, rng: &mut rand_chacha::ChaCha8Rng| {
        run_gas(&slot.poly, &slot.reg, &prepared.space, &params, &start, backend, rng, Some(prepared.optimum))
    };
    let trace = match kind {
        BackendKind::CircuitLevel => {
            let mut b = CircuitBackend::new(&slot.reg, &slot.poly, prepared.prep, q_v, mode)?;
            run(&mut b, &mut rng)?
        }
        BackendKind::AmplitudeLevel => match &prepared.amplitude {
            Some(amp) => run(&mut amp.clone(), &mut rng)?,
            None => run(&mut AmplitudeBackend::new(&slot.poly, &prepared.space, mode)?, &mut rng)?,
        },
    };
    if trace.reached_optimum_at.is_some() {
        verify_convergence(&slot.poly, &trace, &prepared.optimum, &variant.name)?;
    }
    let q_v = (kind == BackendKind::CircuitLevel).then_some(q_v);
    Ok(VariantRun { trace, start, backend: kind, q_v, space_size: nt })
}

fn verify_convergence(poly: &HuboPolynomial, trace: &GasTrace, optimum: &Optimum, name: &str) -> Result<()> {
    let ok = trace.final_x.is_some_and(|x| optimum.is_reached_by(poly.eval_assignment(x)));
    if ok {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name}: run flagged converged but final value {} is not optimal", trace.final_y)))
    }
}

/// Calibration table for `cfg`: loaded when a path is configured,
/// otherwise calibrated on demand.
pub fn resolve_table(spec: &ExperimentSpec, cfg: &SystemConfig, mode: Parallelism) -> Result<Option<CalibrationTable>> {
    if !spec.needs_table() {
        return Ok(None);
    }
    match &spec.calibration.table {
        Some(path) => CalibrationTable::load(path).map(Some),
        None => Ok(Some(calibrate(cfg, spec.calibration.samples, spec.calibration.p, mode)?.0)),
    }
}

fn trial_slot(cfg: &SystemConfig, trial: usize) -> Result<(ChannelInstance, ReceivedSlot)> {
    let inst = generate_instance_with_id(cfg, trial as u64)?;
    let rx = random_slot(&inst, trial as u64 % cfg.payload_len as u64);
    Ok((inst, rx))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRow {
    pub variant: String,
    pub trial: usize,
    pub cd_queries: u64,
    pub qd_rotations: u64,
    pub converged: bool,
}

/// Query complexity of every detector on `spec.trials` independent slots.
/// GAS runs stop at the first optimum hit.
pub fn run_query_cdf(spec: &ExperimentSpec, mode: Parallelism) -> Result<Vec<QueryRow>> {
    spec.validate()?;
    if spec.detectors.iter().any(|d| matches!(d, Detector::Mmse)) {
        return Err(Error::InvalidConfig("query-cdf supports gas and exhaustive detectors only".into()));
    }
    let cfg = &spec.system;
    let table = resolve_table(spec, cfg, mode)?;
    let per_trial = parallel::map_indexed(spec.trials, mode, |trial| -> Result<Vec<QueryRow>> {
        let (inst, rx) = trial_slot(cfg, trial)?;
        let slot = Slot::new(cfg, &inst, &rx)?;
        let mut prepared: Vec<Prepared> = Vec::new();
        let mut rows = Vec::with_capacity(spec.detectors.len());
        for d in &spec.detectors {
            let row = match d {
                Detector::Exhaustive => {
                    let nt = SearchSpace::new(&slot.reg, Preparation::WStateReduced)?.len() as u64;
                    QueryRow { variant: d.name().into(), trial, cd_queries: nt, qd_rotations: 0, converged: true }
                }
                Detector::Gas(v) => {
                    let idx = match prepared.iter().position(|p| p.prep == v.preparation) {
                        Some(i) => i,
                        None => {
                            prepared.push(Prepared::new(
                                &slot.poly,
                                &slot.reg,
                                v.preparation,
                                Parallelism::Sequential,
                            )?);
                            prepared.len() - 1
                        }
                    };
                    let run = run_variant(
                        &slot,
                        &prepared[idx],
                        v,
                        &spec.gas,
                        table.as_ref(),
                        true,
                        Parallelism::Sequential,
                    )?;
                    let (cd, qd) = run.queries();
                    QueryRow {
                        variant: v.name.clone(),
                        trial,
                        cd_queries: cd,
                        qd_rotations: qd,
                        converged: run.converged(),
                    }
                }
                Detector::Mmse => unreachable!("rejected above"),
            };
            rows.push(row);
        }
        Ok(rows)
    });
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

/// Per-variant statistics of a query-complexity run. Unconverged trials
/// count as infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySummary {
    pub variant: String,
    pub trials: usize,
    pub converged: usize,
    pub median_cd: f64,
    pub median_qd: f64,
    /// QD queries by which every trial has converged; `None` unless all did.
    pub qd_full_convergence: Option<u64>,
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Sorted per-trial queries of one variant, with unconverged trials at
/// infinity. `qd` selects QD rotations instead of CD queries.
pub fn query_distribution(rows: &[QueryRow], variant: &str, qd: bool) -> Vec<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| match (r.converged, qd) {
            (false, _) => f64::INFINITY,
            (true, true) => r.qd_rotations as f64,
            (true, false) => r.cd_queries as f64,
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn summarize_queries(rows: &[QueryRow]) -> Vec<QuerySummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.variant.as_str()) {
            names.push(&r.variant);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let cd = query_distribution(rows, name, false);
            let qd = query_distribution(rows, name, true);
            let converged = cd.iter().filter(|x| x.is_finite()).count();
            QuerySummary {
                variant: name.into(),
                trials: cd.len(),
                converged,
                median_cd: quantile(&cd, 0.5),
                median_qd: quantile(&qd, 0.5),
                qd_full_convergence: (converged == qd.len()).then(|| *qd.last().unwrap() as u64),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BerRow {
    pub detector: String,
    pub snr_db: f64,
    pub t_p: Option<u32>,
    pub bits: u64,
    pub errors: u64,
    /// QD rotations to the first optimum hit for each GAS run (`None`
    /// when the optimum was never accepted); empty for other detectors.
    pub qd_to_optimum: Vec<Option<u64>>,
}

impl BerRow {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

fn bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Bit errors of every detector over `trials x slots_per_trial` payload
/// slots at each SNR point. GAS runs use their full budget.
pub fn run_ber(spec: &ExperimentSpec, mode: Parallelism) -> Result<Vec<BerRow>> {
    spec.validate()?;
    let sweep = spec.snr_sweep.clone().unwrap_or_else(|| vec![spec.system.snr_db]);
    let mut rows = Vec::new();
    for snr_db in sweep {
        let cfg = SystemConfig { snr_db, ..spec.system.clone() };
        let table = resolve_table(spec, &cfg, mode)?;
        // One entry per (slot, detector): bits, errors and, for GAS, the
        // rotations to the first optimum hit.
        type Tally = (u64, u64, Option<Option<u64>>);
        let per_trial = parallel::map_indexed(spec.trials, mode, |trial| -> Result<Vec<Tally>> {
            let inst = generate_instance_with_id(&cfg, trial as u64)?;
            let mut acc = Vec::with_capacity(spec.detectors.len() * spec.slots_per_trial as usize);
            for t in 0..spec.slots_per_trial as u64 {
                let rx = random_slot(&inst, t);
                let slot = Slot::new(&cfg, &inst, &rx)?;
                let w = Prepared::new(&slot.poly, &slot.reg, Preparation::WStateReduced, Parallelism::Sequential)?;
                let mut full: Option<Prepared> = None;
                for d in &spec.detectors {
                    let (x, qd) = match d {
                        Detector::Exhaustive => (Some(w.optimum.x), None),
                        Detector::Mmse => (Some(y_mmse(&slot.problem(), &slot.reg)?.0), None),
                        Detector::Gas(v) => {
                            let prepared = if v.preparation == w.prep {
                                &w
                            } else {
                                if full.is_none() {
                                    full = Some(Prepared::new(
                                        &slot.poly,
                                        &slot.reg,
                                        v.preparation,
                                        Parallelism::Sequential,
                                    )?);
                                }
                                full.as_ref().unwrap()
                            };
                            let run = run_variant(
                                &slot,
                                prepared,
                                v,
                                &spec.gas,
                                table.as_ref(),
                                false,
                                Parallelism::Sequential,
                            )?;
                            (run.trace.detection_output(&slot.reg), Some(run.trace.reached_optimum_at.map(|r| r.1)))
                        }
                    };
                    let b_hat = match x {
                        Some(x) => slot.reg.decode(x).b,
                        None => vec![0; rx.b_true.len()],
                    };
                    acc.push((rx.b_true.len() as u64, bit_errors(&b_hat, &rx.b_true), qd));
                }
            }
            Ok(acc)
        });
        let mut det_rows: Vec<BerRow> = spec
            .detectors
            .iter()
            .map(|d| BerRow {
                detector: d.name().into(),
                snr_db,
                t_p: cfg.preamble_len,
                bits: 0,
                errors: 0,
                qd_to_optimum: Vec::new(),
            })
            .collect();
        for acc in per_trial {
            for (k, (bits, errors, qd)) in acc?.into_iter().enumerate() {
                let row = &mut det_rows[k % spec.detectors.len()];
                row.bits += bits;
                row.errors += errors;
                if let Some(q) = qd {
                    row.qd_to_optimum.push(q);
                }
            }
        }
        rows.extend(det_rows);
    }
    Ok(rows)
}

/// Calibration samples with per-indicator binned `L_opt` spread.
#[derive(Clone, Debug)]
pub struct CalibrationRun {
    pub table: CalibrationTable,
    pub samples: Vec<CalibrationSample>,
    /// `(indicator name, spread)` for C, C1, C2 and C'.
    pub spreads: Vec<(&'static str, f64)>,
}

pub fn run_calibration(spec: &ExperimentSpec, mode: Parallelism) -> Result<CalibrationRun> {
    spec.validate()?;
    let cs = &spec.calibration;
    if cs.samples == 0 {
        return Err(Error::InvalidConfig("calibration.samples must be positive".into()));
    }
    let (table, samples) = calibrate(&spec.system, cs.samples, cs.p, mode)?;
    type Pick = (&'static str, fn(&CalibrationSample) -> f64);
    let pick: [Pick; 4] = [
        ("c", |s| s.indicators.c),
        ("c1", |s| s.indicators.c1),
        ("c2", |s| s.indicators.c2),
        ("c_prime", |s| s.indicators.c_prime),
    ];
    let spreads = pick
        .iter()
        .map(|(name, f)| {
            let pts: Vec<(f64, u64)> = samples.iter().map(|s| (f(s), s.l_opt)).collect();
            (*name, binned_spread(&pts, cs.bins, cs.min_bin_count))
        })
        .collect();
    Ok(CalibrationRun { table, samples, spreads })
}

pub fn run_gate_count(spec: &ExperimentSpec) -> Result<Vec<GateCountReport>> {
    spec.gate_cases.iter().map(|c| gate_count_report(c.n_users, c.tau_max, c.q_v, c.modulation)).collect()
}
