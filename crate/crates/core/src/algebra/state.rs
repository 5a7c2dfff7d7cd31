use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ModeId;
use crate::error::{Error, Result};
use crate::spectral::{same_grid, Factor, FrequencyGrid, SpectralAmplitude};
use crate::tensor;

/// Merged coefficients smaller than this fraction of their largest
/// contribution are treated as exact cancellations.
pub const DROP_TOL: f64 = 1e-14;

/// `coeff · ∫ h(ω_1 … ω_n) Π_j slots[j]†(ω_j) |0⟩`: slot `j` carries
/// amplitude argument `j`.
#[derive(Clone, Debug)]
pub struct MonomialTerm {
    pub(crate) coeff: Complex64,
    pub(crate) slots: Vec<ModeId>,
    pub(crate) amplitude: SpectralAmplitude,
}

impl MonomialTerm {
    pub fn new(coeff: Complex64, slots: Vec<ModeId>, amplitude: SpectralAmplitude) -> Result<Self> {
        if slots.len() != amplitude.arity() {
            return Err(Error::ArityMismatch { expected: slots.len(), found: amplitude.arity() });
        }
        let mut t = MonomialTerm { coeff, slots, amplitude };
        t.canonicalize();
        Ok(t)
    }

    pub fn coeff(&self) -> Complex64 {
        self.coeff
    }

    pub fn slots(&self) -> &[ModeId] {
        &self.slots
    }

    pub fn amplitude(&self) -> &SpectralAmplitude {
        &self.amplitude
    }

    pub fn photon_count(&self, mode: ModeId) -> usize {
        self.slots.iter().filter(|&&m| m == mode).count()
    }

    pub fn photons_in(&self, scope: &[ModeId]) -> usize {
        self.slots.iter().filter(|m| scope.contains(m)).count()
    }

    pub(crate) fn with_coeff(mut self, coeff: Complex64) -> Self {
        self.coeff = coeff;
        self
    }

    /// Sorts slots by mode and brings the amplitude blocks into a canonical
    /// layout, so equal monomials compare structurally equal.
    pub(crate) fn canonicalize(&mut self) {
        let n = self.slots.len();
        if n == 0 {
            return;
        }
        let b = self.amplitude.grid().bins();
        let factors = self.amplitude.factors();
        let mut owner = vec![(0u64, 0usize); n];
        for f in factors {
            let fp = f.fingerprint();
            for (p, &a) in f.args.iter().enumerate() {
                owner[a] = (fp, p);
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| (self.slots[j], owner[j].0, owner[j].1, j));
        let already = order.iter().enumerate().all(|(k, &j)| k == j)
            && factors.iter().all(|f| f.args.windows(2).all(|w| w[0] < w[1]))
            && factors.windows(2).all(|w| w[0].args[0] < w[1].args[0]);
        if already {
            return;
        }
        let mut new_of = vec![0usize; n];
        for (k, &j) in order.iter().enumerate() {
            new_of[j] = k;
        }
        let mut out: Vec<Factor> = factors
            .iter()
            .map(|f| {
                let relabeled: Vec<usize> = f.args.iter().map(|&a| new_of[a]).collect();
                let mut axis: Vec<usize> = (0..relabeled.len()).collect();
                axis.sort_by_key(|&p| relabeled[p]);
                let args: Vec<usize> = axis.iter().map(|&p| relabeled[p]).collect();
                if axis.iter().enumerate().all(|(k, &p)| k == p) {
                    Factor { args, data: f.data.clone() }
                } else {
                    Factor::new(args, tensor::permute_axes(&f.data, b, &axis))
                }
            })
            .collect();
        out.sort_by_key(|f| f.args[0]);
        self.slots = order.iter().map(|&j| self.slots[j]).collect();
        self.amplitude = SpectralAmplitude::from_parts(self.amplitude.grid().clone(), n, out);
    }

    fn merge_key(&self) -> (Vec<ModeId>, Vec<(Vec<usize>, u64)>) {
        (self.slots.clone(), self.amplitude.factors().iter().map(|f| (f.args.clone(), f.fingerprint())).collect())
    }

    fn same_structure(&self, other: &MonomialTerm) -> bool {
        self.slots == other.slots && self.amplitude == other.amplitude
    }

    fn is_zero(&self) -> bool {
        self.coeff == Complex64::new(0.0, 0.0)
            || self.amplitude.factors().iter().any(|f| f.data.iter().all(|z| *z == Complex64::new(0.0, 0.0)))
    }
}

/// A finite sum of creation monomials applied to the vacuum. An empty term
/// list is the zero vector; the vacuum is one slot-free term.
#[derive(Clone, Debug)]
pub struct StateVector {
    grid: Arc<FrequencyGrid>,
    terms: Vec<MonomialTerm>,
}

impl StateVector {
    pub fn vacuum(grid: Arc<FrequencyGrid>) -> Self {
        let amp = SpectralAmplitude::unit(grid.clone());
        StateVector { grid, terms: vec![MonomialTerm { coeff: Complex64::new(1.0, 0.0), slots: Vec::new(), amplitude: amp }] }
    }

    pub fn zero(grid: Arc<FrequencyGrid>) -> Self {
        StateVector { grid, terms: Vec::new() }
    }

    /// Builds a state and merges equal monomials.
    pub fn from_terms(grid: Arc<FrequencyGrid>, terms: Vec<MonomialTerm>) -> Result<Self> {
        for t in &terms {
            if !same_grid(&grid, t.amplitude.grid()) {
                return Err(Error::GridMismatch("term amplitude is on a different grid".into()));
            }
        }
        Ok(StateVector { grid, terms: merge_terms(terms) })
    }

    /// One-monomial state `coeff ∫ h Π slots† |0⟩`.
    pub fn monomial(coeff: Complex64, slots: Vec<ModeId>, amplitude: SpectralAmplitude) -> Result<Self> {
        let grid = amplitude.grid().clone();
        Self::from_terms(grid, vec![MonomialTerm::new(coeff, slots, amplitude)?])
    }

    pub(crate) fn from_merged(grid: Arc<FrequencyGrid>, terms: Vec<MonomialTerm>) -> Self {
        StateVector { grid, terms: merge_terms(terms) }
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn terms(&self) -> &[MonomialTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Modes appearing in any term, sorted.
    pub fn modes(&self) -> Vec<ModeId> {
        let mut m: Vec<ModeId> = self.terms.iter().flat_map(|t| t.slots.iter().copied()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn max_photons(&self) -> usize {
        self.terms.iter().map(|t| t.slots.len()).max().unwrap_or(0)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| t.clone().with_coeff(t.coeff * c)).collect();
        StateVector::from_merged(self.grid.clone(), terms)
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch("states live on different grids".into()));
        }
        let terms = self.terms.iter().chain(&other.terms).cloned().collect();
        Ok(StateVector::from_merged(self.grid.clone(), terms))
    }

    /// Product of the two creation polynomials, acting on the vacuum.
    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch("states live on different grids".into()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut slots = a.slots.clone();
                slots.extend_from_slice(&b.slots);
                let mut t = MonomialTerm { coeff: a.coeff * b.coeff, slots, amplitude: a.amplitude.tensor(&b.amplitude)? };
                t.canonicalize();
                terms.push(t);
            }
        }
        Ok(StateVector::from_merged(self.grid.clone(), terms))
    }

    /// Keeps only terms for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&MonomialTerm) -> bool) -> Self {
        StateVector { grid: self.grid.clone(), terms: self.terms.iter().filter(|t| keep(t)).cloned().collect() }
    }

    /// Rescales each term's coefficient.
    pub fn map_coeffs(&self, f: impl Fn(&MonomialTerm) -> Complex64) -> Self {
        let terms = self.terms.iter().map(|t| t.clone().with_coeff(t.coeff * f(t))).collect();
        StateVector::from_merged(self.grid.clone(), terms)
    }

    /// Renames modes; the map must be injective on this state's modes.
    pub fn relabel(&self, map: impl Fn(ModeId) -> ModeId) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.slots.iter_mut().for_each(|m| *m = map(*m));
                t.canonicalize();
                t
            })
            .collect();
        StateVector::from_merged(self.grid.clone(), terms)
    }
}

pub(crate) fn merge_terms(terms: Vec<MonomialTerm>) -> Vec<MonomialTerm> {
    let mut out: Vec<MonomialTerm> = Vec::with_capacity(terms.len());
    let mut largest: Vec<f64> = Vec::with_capacity(terms.len());
    let mut index: HashMap<(Vec<ModeId>, Vec<(Vec<usize>, u64)>), Vec<usize>> = HashMap::new();
    for t in terms {
        if t.is_zero() {
            continue;
        }
        let bucket = index.entry(t.merge_key()).or_default();
        match bucket.iter().copied().find(|&k| out[k].same_structure(&t)) {
            Some(k) => {
                largest[k] = largest[k].max(t.coeff.norm());
                out[k].coeff += t.coeff;
            }
            None => {
                bucket.push(out.len());
                largest.push(t.coeff.norm());
                out.push(t);
            }
        }
    }
    out.into_iter()
        .zip(largest)
        .filter(|(t, big)| t.coeff.norm() > DROP_TOL * big)
        .map(|(t, _)| t)
        .collect()
}

// --- wire format ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermWire {
    #[serde(with = "crate::complex_serde::scalar")]
    coeff: Complex64,
    slots: Vec<SlotWire>,
    amplitude: SpectralAmplitude,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotWire {
    mode: ModeId,
    arg: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateWire {
    grid: FrequencyGrid,
    terms: Vec<TermWire>,
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateWire {
            grid: (*self.grid).clone(),
            terms: self
                .terms
                .iter()
                .map(|t| TermWire {
                    coeff: t.coeff,
                    slots: t.slots.iter().enumerate().map(|(arg, &mode)| SlotWire { mode, arg }).collect(),
                    amplitude: t.amplitude.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = StateWire::deserialize(d)?;
        let grid = Arc::new(w.grid);
        let mut terms = Vec::with_capacity(w.terms.len());
        for t in w.terms {
            if **t.amplitude.grid() != *grid {
                return Err(D::Error::custom("term amplitude grid differs from state grid"));
            }
            let n = t.slots.len();
            let mut slots = vec![None; n];
            for s in &t.slots {
                if s.arg >= n || slots[s.arg].replace(s.mode).is_some() {
                    return Err(D::Error::custom(format!("slot argument {} repeated or out of range", s.arg)));
                }
            }
            let amp = SpectralAmplitude::from_parts(grid.clone(), t.amplitude.arity(), t.amplitude.into_factors());
            let slots = slots.into_iter().map(|m| m.unwrap()).collect();
            terms.push(MonomialTerm::new(t.coeff, slots, amp).map_err(D::Error::custom)?);
        }
        StateVector::from_terms(grid, terms).map_err(D::Error::custom)
    }
}
