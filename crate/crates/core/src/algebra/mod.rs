//! Modes, creation-monomial states and their vacuum contractions.

mod contract;
mod onebody;
mod state;
mod substitution;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contract::{gram_matrix, inner_product, norm_squared, term_overlap, MAX_BIJECTIONS};
pub(crate) use contract::{contract_full, pairings};
pub use onebody::{energy_expectation, OneBodyOperator, HBAR};
pub(crate) use state::merge_terms;
pub use state::{MonomialTerm, StateVector, DROP_TOL};
pub use substitution::{apply_substitution, Coefficient, Substitution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeId(pub u32);

impl ModeId {
    const TAG: u32 = 1 << 31;

    pub(crate) fn tagged(self) -> ModeId {
        ModeId(self.0 | Self::TAG)
    }

    pub(crate) fn is_tagged(self) -> bool {
        self.0 & Self::TAG != 0
    }

    pub(crate) fn untagged(self) -> ModeId {
        ModeId(self.0 & !Self::TAG)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Propagation direction along a fiber.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
pub enum Direction {
    #[default]
    #[serde(rename = "+")]
    Forward,
    #[serde(rename = "-")]
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "+",
            Direction::Backward => "-",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub id: ModeId,
    pub name: String,
    pub fiber: String,
    pub polarization: u8,
    pub direction: Direction,
}

/// Named modes; ids are dense indices in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeRegistry {
    modes: Vec<Mode>,
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, fiber: &str, polarization: u8, direction: Direction) -> Result<ModeId> {
        if !(polarization == 1 || polarization == 2) {
            return Err(Error::OutOfRange(format!("mode {name}: polarization must be 1 or 2")));
        }
        if self.get(name).is_some() {
            return Err(Error::Invalid(format!("mode {name} declared twice")));
        }
        if let Some(m) = self
            .modes
            .iter()
            .find(|m| m.fiber == fiber && m.polarization == polarization && m.direction == direction)
        {
            return Err(Error::Invalid(format!(
                "modes {} and {name} share fiber {fiber}, polarization {polarization}, direction {direction}",
                m.name
            )));
        }
        let id = ModeId(self.modes.len() as u32);
        self.modes.push(Mode { id, name: name.into(), fiber: fiber.into(), polarization, direction });
        Ok(id)
    }

    /// A mode on its own fiber, polarization 1, forward.
    pub fn add(&mut self, name: &str) -> Result<ModeId> {
        self.declare(name, name, 1, Direction::Forward)
    }

    pub fn get(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().find(|m| m.name == name).map(|m| m.id)
    }

    pub fn id(&self, name: &str) -> Result<ModeId> {
        self.get(name).ok_or_else(|| Error::UnknownMode(name.into()))
    }

    pub fn mode(&self, id: ModeId) -> Option<&Mode> {
        self.modes.get(id.index())
    }

    pub fn name(&self, id: ModeId) -> String {
        self.mode(id).map_or_else(|| id.to_string(), |m| m.name.clone())
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter()
    }
}

/// Commutator coefficients `[x(ω), y†(ω′)] = κ_xy δ(ω − ω′)`. Unlisted
/// distinct pairs are orthogonal; the diagonal is 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeOverlap {
    entries: BTreeMap<(ModeId, ModeId), Complex64>,
}

impl ModeOverlap {
    pub fn orthogonal() -> Self {
        Self::default()
    }

    /// Sets `κ_xy` (and `κ_yx = κ_xy*`).
    pub fn set(&mut self, x: ModeId, y: ModeId, kappa: Complex64) -> Result<()> {
        if x == y {
            return Err(Error::Invalid("mode self-overlap is fixed at 1".into()));
        }
        if kappa.norm() > 1.0 + 1e-12 {
            return Err(Error::OutOfRange(format!("overlap magnitude {} exceeds 1", kappa.norm())));
        }
        let (key, val) = if x < y { ((x, y), kappa) } else { ((y, x), kappa.conj()) };
        if val == Complex64::new(0.0, 0.0) {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, val);
        }
        Ok(())
    }

    pub fn with(mut self, x: ModeId, y: ModeId, kappa: Complex64) -> Result<Self> {
        self.set(x, y, kappa)?;
        Ok(self)
    }

    pub fn kappa(&self, x: ModeId, y: ModeId) -> Complex64 {
        if x == y {
            return Complex64::new(1.0, 0.0);
        }
        if x < y {
            self.entries.get(&(x, y)).copied().unwrap_or_default()
        } else {
            self.entries.get(&(y, x)).map(|z| z.conj()).unwrap_or_default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every mode of `a` is orthogonal to every mode of `b`.
    pub fn separates(&self, a: &[ModeId], b: &[ModeId]) -> Option<(ModeId, ModeId)> {
        self.entries.keys().copied().find(|&(x, y)| {
            (a.contains(&x) && b.contains(&y)) || (a.contains(&y) && b.contains(&x))
        })
    }

    /// Checks positive semidefiniteness over the given modes.
    pub fn check_psd(&self, modes: &[ModeId]) -> Result<()> {
        let n = modes.len();
        let m = DMatrix::from_fn(n, n, |i, j| self.kappa(modes[i], modes[j]));
        let eig = m.symmetric_eigenvalues();
        if let Some(min) = eig.iter().copied().reduce(f64::min) {
            if min < -1e-12 {
                return Err(Error::Invalid(format!("mode overlap matrix is not positive semidefinite (eigenvalue {min:.3e})")));
            }
        }
        Ok(())
    }
}
