//! Frequency-preserving linear networks: per-bin unitary maps from input to
//! output modes, applied as substitutions on creation operators.
//!
//! Convention: `x_in,j†(ω) ↦ Σ_k U_kj(ω) y_out,k†(ω)`, so column `j` of `U`
//! lists where input `j` goes.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::algebra::{apply_substitution, Coefficient, ModeId, StateVector, Substitution};
use crate::error::{Error, Result};

/// Largest accepted `‖U†U − I‖_F` at any bin.
pub const UNITARY_TOL: f64 = 1e-10;

pub type CMatrix = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `‖U†U − I‖_F`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    (u.adjoint() * u - CMatrix::identity(u.nrows(), u.ncols())).norm()
}

#[derive(Clone, Debug)]
pub struct UnitaryField {
    modes_in: Vec<ModeId>,
    modes_out: Vec<ModeId>,
    /// One matrix (frequency-flat) or one per grid bin.
    matrices: Vec<CMatrix>,
}

impl UnitaryField {
    pub fn per_bin(modes_in: Vec<ModeId>, modes_out: Vec<ModeId>, matrices: Vec<CMatrix>) -> Result<Self> {
        let n = modes_in.len();
        if n == 0 || modes_out.len() != n {
            return Err(Error::OutOfRange(format!("channel needs equal nonempty port lists, got {n} in and {} out", modes_out.len())));
        }
        for list in [&modes_in, &modes_out] {
            if list.iter().collect::<BTreeSet<_>>().len() != n {
                return Err(Error::OutOfRange("channel port list repeats a mode".into()));
            }
        }
        if matrices.is_empty() {
            return Err(Error::OutOfRange("channel has no matrices".into()));
        }
        for (bin, u) in matrices.iter().enumerate() {
            if u.nrows() != n || u.ncols() != n {
                return Err(Error::OutOfRange(format!("matrix at bin {bin} is {}x{}, expected {n}x{n}", u.nrows(), u.ncols())));
            }
            let residual = unitarity_residual(u);
            if !(residual <= UNITARY_TOL) {
                return Err(Error::NotUnitary { bin, residual });
            }
        }
        Ok(UnitaryField { modes_in, modes_out, matrices })
    }

    pub fn flat(modes_in: Vec<ModeId>, modes_out: Vec<ModeId>, u: CMatrix) -> Result<Self> {
        Self::per_bin(modes_in, modes_out, vec![u])
    }

    pub fn modes_in(&self) -> &[ModeId] {
        &self.modes_in
    }

    pub fn modes_out(&self) -> &[ModeId] {
        &self.modes_out
    }

    pub fn is_flat(&self) -> bool {
        self.matrices.len() == 1
    }

    /// `U` at `bin` (the single matrix when flat).
    pub fn matrix(&self, bin: usize) -> &CMatrix {
        &self.matrices[if self.is_flat() { 0 } else { bin }]
    }

    pub fn max_residual(&self) -> f64 {
        self.matrices.iter().map(unitarity_residual).fold(0.0, f64::max)
    }

    /// The creation-operator substitution for a grid of `bins` bins.
    pub fn substitution(&self, bins: usize) -> Result<Substitution> {
        if !self.is_flat() && self.matrices.len() != bins {
            return Err(Error::GridMismatch(format!("channel has {} bins, state has {bins}", self.matrices.len())));
        }
        let mut s = Substitution::new();
        for (j, &x) in self.modes_in.iter().enumerate() {
            let targets = self
                .modes_out
                .iter()
                .enumerate()
                .map(|(k, &y)| {
                    let coeff = if self.is_flat() {
                        Coefficient::Flat(self.matrices[0][(k, j)])
                    } else {
                        Coefficient::PerBin(self.matrices.iter().map(|u| u[(k, j)]).collect::<Arc<[_]>>())
                    };
                    (y, coeff)
                })
                .collect();
            s.set(x, targets);
        }
        Ok(s)
    }
}

/// Applies `ch`; every mode of `psi` must be an input of `ch`.
pub fn apply_channel(psi: &StateVector, ch: &UnitaryField) -> Result<StateVector> {
    for m in psi.modes() {
        if !ch.modes_in.contains(&m) {
            return Err(Error::UncoveredMode { mode: m.to_string(), context: "channel inputs".into() });
        }
    }
    apply_substitution(psi, &ch.substitution(psi.grid().bins())?)
}

/// Applies `ch`, passing modes that are not channel inputs through
/// unchanged. A passed-through mode may not also be a channel output.
pub fn apply_channel_spectators(psi: &StateVector, ch: &UnitaryField) -> Result<StateVector> {
    let mut s = ch.substitution(psi.grid().bins())?;
    for m in psi.modes() {
        if !ch.modes_in.contains(&m) {
            if ch.modes_out.contains(&m) {
                return Err(Error::OutOfRange(format!("spectator mode {m} collides with a channel output")));
            }
            s.passthrough(m);
        }
    }
    apply_substitution(psi, &s)
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(())
}

/// `input† ↦ √η out1† + √(1−η) out2†`; the second input port `vacuum` is
/// normally unoccupied.
pub fn beam_splitter(input: ModeId, vacuum: ModeId, out1: ModeId, out2: ModeId, eta_trans: f64) -> Result<UnitaryField> {
    check_fraction("eta_trans", eta_trans)?;
    let (t, r) = (eta_trans.sqrt(), (1.0 - eta_trans).sqrt());
    let u = CMatrix::from_row_slice(2, 2, &[c(t), c(-r), c(r), c(t)]);
    UnitaryField::flat(vec![input, vacuum], vec![out1, out2], u)
}

/// Per-bin loss `b′† ↦ η(ω) b† + √(1−|η(ω)|²) c†` into an extraneous mode
/// `c`; `vacuum` is the unoccupied second input.
pub fn loss_channel(b_prime: ModeId, vacuum: ModeId, b: ModeId, c_loss: ModeId, eta_loss: &[Complex64]) -> Result<UnitaryField> {
    let mats = eta_loss
        .iter()
        .map(|&eta| {
            let n = eta.norm_sqr();
            if n > 1.0 + 1e-12 {
                return Err(Error::OutOfRange(format!("|eta_loss|² = {n} above 1")));
            }
            let s = c((1.0 - n).max(0.0).sqrt());
            Ok(CMatrix::from_row_slice(2, 2, &[eta, -s, s, eta.conj()]))
        })
        .collect::<Result<Vec<_>>>()?;
    UnitaryField::per_bin(vec![b_prime, vacuum], vec![b, c_loss], mats)
}

/// Frequency-flat SU(2) map `[[u, v], [−v*, u*]]` on `(a₁, a₂)`.
pub fn polarization_rotation(a1: ModeId, a2: ModeId, u: Complex64, v: Complex64) -> Result<UnitaryField> {
    let n = u.norm_sqr() + v.norm_sqr();
    if (n - 1.0).abs() > UNITARY_TOL {
        return Err(Error::OutOfRange(format!("|u|² + |v|² = {n}, expected 1")));
    }
    UnitaryField::flat(vec![a1, a2], vec![a1, a2], CMatrix::from_row_slice(2, 2, &[u, v, -v.conj(), u.conj()]))
}

/// Fiber splice. Inputs are ordered `[b₁−, a₁+, b₂−, a₂+]`, outputs
/// `[a₁−, b₁+, a₂−, b₂+]`.
pub fn splice(inputs: [ModeId; 4], outputs: [ModeId; 4], u: Vec<CMatrix>) -> Result<UnitaryField> {
    UnitaryField::per_bin(inputs.to_vec(), outputs.to_vec(), u)
}

/// Splice whose 4×4 matrix factors into one 2×2 block per polarization.
pub fn splice_decoupled(inputs: [ModeId; 4], outputs: [ModeId; 4], pol1: Vec<CMatrix>, pol2: Vec<CMatrix>) -> Result<UnitaryField> {
    if pol1.len() != pol2.len() {
        return Err(Error::OutOfRange("polarization blocks have different bin counts".into()));
    }
    let mats = pol1.iter().zip(&pol2).map(|(p, q)| block_diagonal(&[p, q])).collect();
    splice(inputs, outputs, mats)
}

/// Four-fiber coupler over eight directed modes.
pub fn coupler(inputs: [ModeId; 8], outputs: [ModeId; 8], u: Vec<CMatrix>) -> Result<UnitaryField> {
    UnitaryField::per_bin(inputs.to_vec(), outputs.to_vec(), u)
}

pub fn block_diagonal(blocks: &[&CMatrix]) -> CMatrix {
    let n = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = CMatrix::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        m.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
        o += b.nrows();
    }
    m
}

/// Propagation phase `e^{i k(ω) x}` on a single mode. `k` is sampled per
/// bin and must increase strictly with frequency.
pub fn phase_advance(mode: ModeId, k: &[f64], x: f64) -> Result<UnitaryField> {
    if k.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::OutOfRange("wave number must increase with frequency".into()));
    }
    let mats = k.iter().map(|&kk| CMatrix::from_element(1, 1, Complex64::from_polar(1.0, kk * x))).collect();
    UnitaryField::per_bin(vec![mode], vec![mode], mats)
}

/// Haar-random `n×n` unitary (QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal divided out).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        let (re, im): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        Complex64::new(re, im)
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        q.column_mut(j).scale_mut_complex(ph);
    }
    q
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleComplex
    for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_complex(&mut self, s: Complex64) {
        self.iter_mut().for_each(|x| *x *= s);
    }
}
