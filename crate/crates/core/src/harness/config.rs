use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{Modulation, SystemConfig};
use crate::error::{Error, Result};
use crate::gas::{BackendKind, LminPolicy, ThresholdPolicy, DEFAULT_LAMBDA};
use crate::hubo::Preparation;

/// One configuration of the adaptive search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasVariant {
    pub name: String,
    pub preparation: Preparation,
    pub threshold: ThresholdPolicy,
    pub lmin: LminPolicy,
    pub restart: bool,
}

impl Default for GasVariant {
    fn default() -> Self {
        Self {
            name: "gas".into(),
            preparation: Preparation::WStateReduced,
            threshold: ThresholdPolicy::Mvd { p: 1e-3 },
            lmin: LminPolicy::ProposedCPrime,
            restart: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    Gas(GasVariant),
    /// Full enumeration of the one-hot space.
    Exhaustive,
    /// Quantized linear MMSE, best over delay hypotheses.
    Mmse,
}

impl Detector {
    pub fn name(&self) -> &str {
        match self {
            Detector::Gas(v) => &v.name,
            Detector::Exhaustive => "exhaustive",
            Detector::Mmse => "mmse",
        }
    }
}

/// Settings shared by every search variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSettings {
    pub lambda: f64,
    /// `null` selects `10 sqrt(N_t)`.
    pub budget_iterations: Option<u64>,
    /// `null` selects `50 sqrt(N_t)`.
    pub budget_rotations: Option<u64>,
    /// `null` selects the circuit backend when it fits in 22 qubits.
    pub backend: Option<BackendKind>,
    /// Value-register width for the circuit backend; `null` picks the
    /// smallest width that holds every reachable `E(x) - y`.
    pub q_v: Option<usize>,
}

impl Default for GasSettings {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, budget_iterations: None, budget_rotations: None, backend: None, q_v: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub samples: usize,
    /// Exceedance probability of the threshold used to count `N_s`.
    pub p: f64,
    /// Existing table (CSV with JSON sidecar). When absent, a table is
    /// calibrated on demand for every system configuration that needs one.
    pub table: Option<PathBuf>,
    pub bins: usize,
    pub min_bin_count: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { samples: 2000, p: 1e-3, table: None, bins: 20, min_bin_count: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateCase {
    pub n_users: u64,
    pub tau_max: u64,
    pub q_v: u64,
    pub modulation: Modulation,
}

/// A complete experiment description; see `docs/config.md`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemConfig,
    pub gas: GasSettings,
    pub trials: usize,
    /// Payload slots detected per trial in BER runs.
    pub slots_per_trial: u32,
    pub snr_sweep: Option<Vec<f64>>,
    pub detectors: Vec<Detector>,
    pub calibration: CalibrationSettings,
    pub gate_cases: Vec<GateCase>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            system: SystemConfig::default(),
            gas: GasSettings::default(),
            trials: 100,
            slots_per_trial: 1,
            snr_sweep: None,
            detectors: vec![Detector::Gas(GasVariant::default())],
            calibration: CalibrationSettings::default(),
            gate_cases: vec![GateCase { n_users: 4, tau_max: 1, q_v: 1, modulation: Modulation::Psk2 }],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.system.validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.slots_per_trial == 0 {
            return bad("slots_per_trial must be at least 1".into());
        }
        if !(self.gas.lambda > 1.0 && self.gas.lambda < 4.0 / 3.0) {
            return bad(format!("gas.lambda = {} must lie in (1, 4/3)", self.gas.lambda));
        }
        if self.gas.budget_iterations == Some(0) || self.gas.budget_rotations == Some(0) {
            return bad("gas budgets must be positive".into());
        }
        if let Some(sweep) = &self.snr_sweep {
            if sweep.is_empty() || sweep.iter().any(|s| !s.is_finite()) {
                return bad("snr_sweep must be a non-empty list of finite values".into());
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.detectors {
            if !names.insert(d.name()) {
                return bad(format!("duplicate detector name {:?}", d.name()));
            }
            if let Detector::Gas(v) = d {
                if v.name.is_empty() || v.name.contains(',') {
                    return bad(format!("detector name {:?} must be non-empty and free of commas", v.name));
                }
                if let ThresholdPolicy::Mvd { p } = v.threshold {
                    if !(1e-12..1.0).contains(&p) {
                        return bad(format!("{}: exceedance probability {p} must lie in [1e-12, 1)", v.name));
                    }
                }
            }
        }
        if self.calibration.samples == 0 && self.calibration.table.is_none() && self.needs_table() {
            return bad("calibration.samples must be positive when no table is given".into());
        }
        if !(self.calibration.p > 0.0 && self.calibration.p < 1.0) {
            return bad(format!("calibration.p = {} must lie in (0, 1)", self.calibration.p));
        }
        if let Some(t) = &self.calibration.table {
            if !t.exists() {
                return bad(format!("calibration table {} does not exist", t.display()));
            }
        }
        if self.calibration.bins == 0 {
            return bad("calibration.bins must be at least 1".into());
        }
        Ok(())
    }

    /// True when some variant needs a calibration table, either for its
    /// minimum rotation count or for its restart bound.
    pub fn needs_table(&self) -> bool {
        self.gas_variants().any(|v| v.lmin == LminPolicy::ProposedCPrime || v.restart)
    }

    pub fn gas_variants(&self) -> impl Iterator<Item = &GasVariant> {
        self.detectors.iter().filter_map(|d| match d {
            Detector::Gas(v) => Some(v),
            _ => None,
        })
    }
}
