use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::state::{merge_terms, MonomialTerm, StateVector};
use super::ModeId;
use crate::error::{Error, Result};

/// Expansion coefficient `c_yx(ω)` of a substitution target.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Flat(Complex64),
    PerBin(Arc<[Complex64]>),
}

impl Coefficient {
    pub fn at(&self, bin: usize) -> Complex64 {
        match self {
            Coefficient::Flat(c) => *c,
            Coefficient::PerBin(v) => v[bin],
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Coefficient::Flat(c) => *c == Complex64::new(0.0, 0.0),
            Coefficient::PerBin(v) => v.iter().all(|z| *z == Complex64::new(0.0, 0.0)),
        }
    }
}

/// Linear map on creation operators, `x†(ω) ↦ Σ_y c_yx(ω) y†(ω)`.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    rules: BTreeMap<ModeId, Vec<(ModeId, Coefficient)>>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity(modes: &[ModeId]) -> Self {
        let mut s = Self::new();
        for &m in modes {
            s.passthrough(m);
        }
        s
    }

    pub fn set(&mut self, from: ModeId, targets: Vec<(ModeId, Coefficient)>) {
        let targets = targets.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        self.rules.insert(from, targets);
    }

    pub fn passthrough(&mut self, mode: ModeId) {
        self.rules.insert(mode, vec![(mode, Coefficient::Flat(Complex64::new(1.0, 0.0)))]);
    }

    pub fn covers(&self, mode: ModeId) -> bool {
        self.rules.contains_key(&mode)
    }

    pub fn sources(&self) -> impl Iterator<Item = ModeId> + '_ {
        self.rules.keys().copied()
    }

    pub fn targets(&self, mode: ModeId) -> Option<&[(ModeId, Coefficient)]> {
        self.rules.get(&mode).map(|v| v.as_slice())
    }
}

/// Substitutes every creation slot and re-merges like terms.
pub fn apply_substitution(psi: &StateVector, rule: &Substitution) -> Result<StateVector> {
    for m in psi.modes() {
        if !rule.covers(m) {
            return Err(Error::UnknownMode(format!("{m} has no substitution rule")));
        }
    }
    let mut terms: Vec<MonomialTerm> = psi.terms().to_vec();
    loop {
        let mut next = Vec::with_capacity(terms.len());
        let mut progressed = false;
        for t in terms {
            let Some(j) = t.slots.iter().position(|m| !m.is_tagged()) else {
                next.push(t);
                continue;
            };
            progressed = true;
            for (target, c) in rule.targets(t.slots[j]).unwrap() {
                let mut nt = t.clone();
                nt.slots[j] = target.tagged();
                match c {
                    Coefficient::Flat(z) => nt.coeff *= z,
                    Coefficient::PerBin(v) => nt.amplitude = nt.amplitude.scale_axis(j, v),
                }
                nt.canonicalize();
                next.push(nt);
            }
        }
        terms = merge_terms(next);
        if !progressed {
            break;
        }
    }
    for t in &mut terms {
        t.slots.iter_mut().for_each(|m| *m = m.untagged());
        t.canonicalize();
    }
    Ok(StateVector::from_merged(psi.grid().clone(), terms))
}
