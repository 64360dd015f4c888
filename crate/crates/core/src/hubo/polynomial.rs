use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Assignment, MAX_VARIABLES};
use crate::error::{Error, Result};

/// One monomial: the product of the variables set in `mask`, times `coeff`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub mask: u64,
    pub coeff: f64,
}

impl Term {
    pub fn order(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn vars(&self) -> Vec<usize> {
        (0..64).filter(|i| self.mask >> i & 1 == 1).collect()
    }
}

/// Real multilinear polynomial over binary variables.
///
/// Immutable after construction. Terms are sorted by mask and never
/// include the empty monomial; that lives in `constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct HuboPolynomial {
    n_vars: usize,
    constant: f64,
    terms: Vec<Term>,
}

#[derive(Serialize, Deserialize)]
struct TermDto {
    vars: Vec<usize>,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyDto {
    constant: f64,
    terms: Vec<TermDto>,
}

impl HuboPolynomial {
    /// Builds from `(variables, coefficient)` pairs. Repeated variables in a
    /// monomial collapse (`x^2 = x`) and equal monomials are summed.
    pub fn from_terms<'a, I>(n_vars: usize, constant: f64, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [usize], f64)>,
    {
        if n_vars > MAX_VARIABLES {
            return Err(Error::Capacity(format!("{n_vars} variables exceed the limit of {MAX_VARIABLES}")));
        }
        let mut map = BTreeMap::new();
        let mut constant = constant;
        for (vars, coeff) in terms {
            let mut mask = 0u64;
            for &v in vars {
                if v >= n_vars {
                    return Err(Error::InvalidConfig(format!("variable {v} outside 0..{n_vars}")));
                }
                mask |= 1 << v;
            }
            if mask == 0 {
                constant += coeff;
            } else {
                *map.entry(mask).or_insert(0.0) += coeff;
            }
        }
        Self::from_masks(n_vars, constant, map)
    }

    /// Builds from a mask-keyed map; zero coefficients are dropped.
    pub fn from_masks(n_vars: usize, constant: f64, map: BTreeMap<u64, f64>) -> Result<Self> {
        if !constant.is_finite() || map.values().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite polynomial coefficient".into()));
        }
        let mut constant = constant;
        let terms = map
            .into_iter()
            .filter_map(|(mask, coeff)| {
                if mask == 0 {
                    constant += coeff;
                    None
                } else {
                    (coeff != 0.0).then_some(Term { mask, coeff })
                }
            })
            .collect();
        Ok(Self { n_vars, constant, terms })
    }

    pub fn constant_only(n_vars: usize, constant: f64) -> Self {
        Self { n_vars, constant, terms: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(Term::order).max().unwrap_or(0)
    }

    #[inline]
    pub fn eval_assignment(&self, x: Assignment) -> f64 {
        self.constant + self.terms.iter().filter(|t| t.mask & !x.0 == 0).map(|t| t.coeff).sum::<f64>()
    }

    pub fn eval(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n_vars {
            return Err(Error::LengthMismatch { expected: self.n_vars, got: x.len() });
        }
        Ok(self.eval_assignment(Assignment::from_bits(x)))
    }

    /// Drops monomials with `|coeff| < rel * max|coeff|`.
    pub fn pruned(&self, rel: f64) -> Self {
        let max = self.terms.iter().map(|t| t.coeff.abs()).fold(0.0, f64::max);
        let cut = rel * max;
        Self {
            n_vars: self.n_vars,
            constant: self.constant,
            terms: self.terms.iter().copied().filter(|t| t.coeff.abs() >= cut).collect(),
        }
    }

    /// Interval containing every value of the polynomial on `{0,1}^n`.
    pub fn value_bounds(&self) -> (f64, f64) {
        let neg: f64 = self.terms.iter().map(|t| t.coeff.min(0.0)).sum();
        let pos: f64 = self.terms.iter().map(|t| t.coeff.max(0.0)).sum();
        (self.constant + neg, self.constant + pos)
    }

    /// Same polynomial with `delta` added to the constant.
    pub fn shifted(&self, delta: f64) -> Self {
        Self { constant: self.constant + delta, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = PolyDto {
            constant: self.constant,
            terms: self.terms.iter().map(|t| TermDto { vars: t.vars(), coeff: t.coeff }).collect(),
        };
        Ok(serde_json::to_string(&dto)?)
    }

    /// Parses the JSON dump; `n_vars` is one past the largest variable index
    /// unless a larger value is given.
    pub fn from_json(s: &str, n_vars: Option<usize>) -> Result<Self> {
        let dto: PolyDto = serde_json::from_str(s)?;
        let inferred = dto.terms.iter().flat_map(|t| t.vars.iter().map(|v| v + 1)).max().unwrap_or(0);
        let n = n_vars.unwrap_or(0).max(inferred);
        Self::from_terms(n, dto.constant, dto.terms.iter().map(|t| (t.vars.as_slice(), t.coeff)))
    }
}

/// Number of nonzero monomials of each order (degree).
pub fn term_counts_by_order(poly: &HuboPolynomial) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for t in poly.terms() {
        *counts.entry(t.order()).or_insert(0) += 1;
    }
    counts
}
