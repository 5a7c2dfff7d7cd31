use num_complex::Complex64;

use super::contract::inner_product;
use super::state::{MonomialTerm, StateVector};
use super::{ModeId, ModeOverlap};
use crate::error::{Error, Result};
use crate::spectral::AxisKernel;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// `Q = Σ_{x∈scope} ∫∫ K(ω, ω′) x†(ω) x(ω′)`. Acting on a monomial it
/// replaces, one in-scope slot at a time, that slot's amplitude argument by
/// `∫ K(ω, ω′) h(…ω′…) dω′`.
#[derive(Clone, Debug)]
pub struct OneBodyOperator {
    scope: Option<Vec<ModeId>>,
    kernel: AxisKernel,
}

impl OneBodyOperator {
    /// `scope = None` acts on every mode.
    pub fn new(scope: Option<Vec<ModeId>>, kernel: AxisKernel) -> Self {
        OneBodyOperator { scope, kernel }
    }

    /// Photon number in `scope`.
    pub fn number(scope: Option<Vec<ModeId>>, bins: usize) -> Self {
        Self::new(scope, AxisKernel::Diagonal(vec![Complex64::new(1.0, 0.0); bins]))
    }

    /// Free-field energy `ħ ∫ ω a†a` summed over `scope`.
    pub fn energy(scope: Option<Vec<ModeId>>, nodes: &[f64]) -> Self {
        Self::new(scope, AxisKernel::Diagonal(nodes.iter().map(|&w| Complex64::new(HBAR * w, 0.0)).collect()))
    }

    pub fn kernel(&self) -> &AxisKernel {
        &self.kernel
    }

    pub fn scope(&self) -> Option<&[ModeId]> {
        self.scope.as_deref()
    }

    fn in_scope(&self, m: ModeId) -> bool {
        self.scope.as_ref().is_none_or(|s| s.contains(&m))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        let len = match &self.kernel {
            AxisKernel::Diagonal(d) => d.len(),
            AxisKernel::Full(k) => (k.len() as f64).sqrt() as usize,
        };
        if len != psi.grid().bins() {
            return Err(Error::GridMismatch(format!("operator kernel over {len} bins, state over {}", psi.grid().bins())));
        }
        let mut out = Vec::new();
        for t in psi.terms() {
            for (j, &m) in t.slots.iter().enumerate() {
                if self.in_scope(m) {
                    let mut nt = MonomialTerm { coeff: t.coeff, slots: t.slots.clone(), amplitude: t.amplitude.apply_axis(j, &self.kernel) };
                    nt.canonicalize();
                    out.push(nt);
                }
            }
        }
        Ok(StateVector::from_merged(psi.grid().clone(), out))
    }

    /// `⟨ψ|Q|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector, overlaps: &ModeOverlap) -> Result<Complex64> {
        inner_product(psi, &self.apply(psi)?, overlaps)
    }
}

/// `⟨ψ|H|ψ⟩` for the free-field energy over all modes, in joules.
pub fn energy_expectation(psi: &StateVector) -> Result<f64> {
    let h = OneBodyOperator::energy(None, psi.grid().nodes());
    Ok(h.expectation(psi, &ModeOverlap::orthogonal())?.re)
}
