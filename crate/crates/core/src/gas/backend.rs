use rand::{Rng, RngCore};

use super::theory::success_probability;
use crate::error::{Error, Result};
use crate::hubo::{Assignment, HuboPolynomial, Preparation, SearchSpace, VarRegistry};
use crate::parallel::{self, Parallelism};
use crate::statevector::GroverCircuit;

/// Produces one measured key for a threshold and rotation count.
pub trait Backend {
    fn sample(&mut self, y: f64, l: u64, rng: &mut dyn RngCore) -> Result<Assignment>;

    /// Size of the searched space.
    fn space_size(&self) -> u64;
}

/// Largest space the amplitude backend will tabulate.
pub const MAX_AMPLITUDE_SPACE: u128 = 1 << 24;

/// Ideal-marking model: samples the marked set with the exact rotation law.
#[derive(Clone, Debug)]
pub struct AmplitudeBackend {
    /// `(E(x), x)` sorted by value.
    landscape: Vec<(f64, Assignment)>,
}

impl AmplitudeBackend {
    pub fn new(poly: &HuboPolynomial, space: &SearchSpace, mode: Parallelism) -> Result<Self> {
        if space.len() > MAX_AMPLITUDE_SPACE {
            return Err(Error::Capacity(format!(
                "search space of {} states exceeds the amplitude-backend limit of {MAX_AMPLITUDE_SPACE}",
                space.len()
            )));
        }
        let mut landscape = parallel::map_indexed(space.len() as usize, mode, |i| {
            let x = space.get(i as u128);
            (poly.eval_assignment(x), x)
        });
        landscape.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(Self { landscape })
    }

    /// Number of states with `E(x) < y`.
    pub fn marked_count(&self, y: f64) -> u64 {
        self.landscape.partition_point(|(e, _)| *e < y) as u64
    }

    pub fn minimum(&self) -> (f64, Assignment) {
        self.landscape[0]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.landscape.iter().map(|(e, _)| *e)
    }
}

impl Backend for AmplitudeBackend {
    fn sample(&mut self, y: f64, l: u64, rng: &mut dyn RngCore) -> Result<Assignment> {
        let nt = self.landscape.len();
        let ns = self.marked_count(y) as usize;
        let idx = if ns == 0 {
            rng.random_range(0..nt)
        } else if ns == nt || rng.random::<f64>() < success_probability(ns as u64, nt as u64, l) {
            rng.random_range(0..ns)
        } else {
            rng.random_range(ns..nt)
        };
        Ok(self.landscape[idx].1)
    }

    fn space_size(&self) -> u64 {
        self.landscape.len() as u64
    }
}

/// Full statevector simulation of `G^L A_y |0>`.
pub struct CircuitBackend<'a> {
    reg: &'a VarRegistry,
    poly: &'a HuboPolynomial,
    prep: Preparation,
    q_v: usize,
    mode: Parallelism,
    space_size: u64,
    cached: Option<(f64, GroverCircuit<'a>)>,
}

impl<'a> CircuitBackend<'a> {
    pub fn new(
        reg: &'a VarRegistry,
        poly: &'a HuboPolynomial,
        prep: Preparation,
        q_v: usize,
        mode: Parallelism,
    ) -> Result<Self> {
        let q = reg.len() + q_v;
        if q > crate::statevector::MAX_QUBITS {
            return Err(Error::Capacity(format!("{q} qubits exceed the dense-simulation limit")));
        }
        let space_size = SearchSpace::new(reg, prep)?.len() as u64;
        Ok(Self { reg, poly, prep, q_v, mode, space_size, cached: None })
    }

    pub fn q_v(&self) -> usize {
        self.q_v
    }

    /// Circuit for threshold `y`, rebuilt only when `y` changes.
    pub fn circuit(&mut self, y: f64) -> Result<&GroverCircuit<'a>> {
        if self.cached.as_ref().map(|(cy, _)| *cy != y).unwrap_or(true) {
            let g = GroverCircuit::new(self.reg, self.poly, self.prep, y, self.q_v, self.mode)?;
            self.cached = Some((y, g));
        }
        Ok(&self.cached.as_ref().expect("just set").1)
    }
}

impl Backend for CircuitBackend<'_> {
    fn sample(&mut self, y: f64, l: u64, rng: &mut dyn RngCore) -> Result<Assignment> {
        let sv = self.circuit(y)?.state_after(l);
        Ok(sv.measure_key(rng))
    }

    fn space_size(&self) -> u64 {
        self.space_size
    }
}
