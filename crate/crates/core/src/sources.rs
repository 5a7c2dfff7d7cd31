//! Constructors for single-photon, n-photon, coherent, bi-photon and
//! polarization-entangled pair states.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{norm_squared, ModeId, ModeOverlap, MonomialTerm, StateVector};
use crate::error::{Error, Result};
use crate::spectral::{SpectralAmplitude, DEFAULT_DENSE_CAP, NORM_TOL};

/// Default bound on the discarded Poisson tail of a coherent state.
pub const DEFAULT_CUTOFF_EPSILON: f64 = 1e-12;

/// Largest photon number a coherent expansion may reach (`n!` must stay
/// finite in double precision).
pub const MAX_COHERENT_PHOTONS: usize = 170;

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn require_unit(amp: &SpectralAmplitude) -> Result<()> {
    let n = amp.norm_squared();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq: n, tol: NORM_TOL });
    }
    Ok(())
}

fn require_unit_state(psi: &StateVector) -> Result<()> {
    let n = norm_squared(psi, &ModeOverlap::orthogonal())?;
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq: n, tol: NORM_TOL });
    }
    Ok(())
}

/// `a_f†|0⟩`.
pub fn single_photon(mode: ModeId, f: &SpectralAmplitude) -> Result<StateVector> {
    if f.arity() != 1 {
        return Err(Error::ArityMismatch { expected: 1, found: f.arity() });
    }
    require_unit(f)?;
    StateVector::monomial(one(), vec![mode], f.clone())
}

/// `(n!)^{-1/2} (h: a†ⁿ)|0⟩`; the symmetrized `h` must have unit norm.
pub fn n_photon_single_mode(mode: ModeId, h: &SpectralAmplitude, n: usize) -> Result<StateVector> {
    if h.arity() != n {
        return Err(Error::ArityMismatch { expected: n, found: h.arity() });
    }
    let psi = StateVector::monomial(Complex64::new(1.0 / factorial(n).sqrt(), 0.0), vec![mode; n], h.clone())?;
    require_unit_state(&psi)?;
    Ok(psi)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoherentSpec {
    #[serde(with = "crate::complex_serde::scalar")]
    pub alpha: Complex64,
    pub f: SpectralAmplitude,
    pub cutoff_epsilon: f64,
}

impl CoherentSpec {
    pub fn new(alpha: Complex64, f: SpectralAmplitude) -> Self {
        CoherentSpec { alpha, f, cutoff_epsilon: DEFAULT_CUTOFF_EPSILON }
    }
}

/// A truncated coherent state with its truncation bookkeeping.
#[derive(Clone, Debug)]
pub struct CoherentState {
    pub state: StateVector,
    pub n_max: usize,
    /// Poisson mass above `n_max`; the state's squared norm is `1 − tail`.
    pub tail: f64,
}

/// Smallest `N` with Poisson(`mean`) mass above `N` below `epsilon`, and
/// that mass.
pub fn poisson_cutoff(mean: f64, epsilon: f64) -> Result<(usize, f64)> {
    if mean == 0.0 {
        return Ok((0, 0.0));
    }
    let ln_p = |n: usize| -mean + n as f64 * mean.ln() - ln_factorial(n);
    for big_n in 0..=MAX_COHERENT_PHOTONS {
        // tail = Σ_{n>N} p_n, summed until terms are negligible
        let mut tail = 0.0;
        let mut n = big_n + 1;
        loop {
            let p = ln_p(n).exp();
            tail += p;
            if (n as f64 > mean && p < tail * 1e-17) || n > big_n + 2000 {
                break;
            }
            n += 1;
        }
        if tail < epsilon {
            return Ok((big_n, tail));
        }
    }
    Err(Error::CutoffTooTight { epsilon, max: MAX_COHERENT_PHOTONS })
}

/// `e^{−|α|²/2} Σ_{n≤N} αⁿ/n! (a_f†)ⁿ |0⟩`.
pub fn coherent(spec: &CoherentSpec, mode: ModeId) -> Result<CoherentState> {
    if spec.f.arity() != 1 {
        return Err(Error::ArityMismatch { expected: 1, found: spec.f.arity() });
    }
    if !(spec.cutoff_epsilon > 0.0 && spec.cutoff_epsilon < 1.0) {
        return Err(Error::OutOfRange(format!("cutoff epsilon {} outside (0, 1)", spec.cutoff_epsilon)));
    }
    require_unit(&spec.f)?;
    let mean = spec.alpha.norm_sqr();
    let (n_max, tail) = poisson_cutoff(mean, spec.cutoff_epsilon)?;
    let grid = spec.f.grid().clone();
    let mut terms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let c = if n == 0 {
            Complex64::new((-mean / 2.0).exp(), 0.0)
        } else {
            let mag = (-mean / 2.0 + n as f64 * spec.alpha.norm().ln() - ln_factorial(n)).exp();
            Complex64::from_polar(mag, n as f64 * spec.alpha.arg())
        };
        terms.push(MonomialTerm::new(c, vec![mode; n], spec.f.power(n))?);
    }
    Ok(CoherentState { state: StateVector::from_terms(grid, terms)?, n_max, tail })
}

/// `Σ_{ij} C_ij (h_ij: a_i† b_j†)|0⟩` over polarization pairs `a = (a₁, a₂)`,
/// `b = (b₁, b₂)`.
#[derive(Clone, Debug)]
pub struct BiPhotonSpec {
    pub c: [[Complex64; 2]; 2],
    /// `h[i][j]` has arguments `(ω for a_i, ω̃ for b_j)`.
    pub h: [[SpectralAmplitude; 2]; 2],
    pub a: [ModeId; 2],
    pub b: [ModeId; 2],
}

impl BiPhotonSpec {
    /// Same kernel for all four polarization combinations.
    pub fn common(c: [[Complex64; 2]; 2], g: SpectralAmplitude, a: [ModeId; 2], b: [ModeId; 2]) -> Self {
        BiPhotonSpec { c, h: [[g.clone(), g.clone()], [g.clone(), g]], a, b }
    }

    /// `C = [[0, 1], [−1, 0]] / √2`.
    pub fn singlet(g: SpectralAmplitude, a: [ModeId; 2], b: [ModeId; 2]) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        Self::common([[z, Complex64::new(s, 0.0)], [Complex64::new(-s, 0.0), z]], g, a, b)
    }
}

pub fn bi_photon(spec: &BiPhotonSpec) -> Result<StateVector> {
    let total: f64 = spec.c.iter().flatten().map(|z| z.norm_sqr()).sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm_sq: total, tol: NORM_TOL });
    }
    let grid = spec.h[0][0].grid().clone();
    let mut terms = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let h = &spec.h[i][j];
            if h.arity() != 2 {
                return Err(Error::ArityMismatch { expected: 2, found: h.arity() });
            }
            if spec.c[i][j] == Complex64::new(0.0, 0.0) {
                continue;
            }
            require_unit(h)?;
            terms.push(MonomialTerm::new(spec.c[i][j], vec![spec.a[i], spec.b[j]], h.clone())?);
        }
    }
    StateVector::from_terms(grid, terms)
}

/// Modes of a polarization-entangled pair source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairModes {
    pub a1: ModeId,
    pub a2: ModeId,
    pub b1: ModeId,
    pub b2: ModeId,
}

/// Unnormalized `ψ_nm`: `m` pairs in `(a₁, b₂)` followed by `n − m` pairs in
/// `(a₂, b₁)`, over a pair-symmetric amplitude whose pair `j` occupies
/// arguments `(2j, 2j+1)`.
fn psi_nm_term(modes: &PairModes, f: &SpectralAmplitude, n: usize, m: usize, coeff: Complex64) -> Result<MonomialTerm> {
    let mut slots = Vec::with_capacity(2 * n);
    for j in 0..n {
        if j < m {
            slots.extend([modes.a1, modes.b2]);
        } else {
            slots.extend([modes.a2, modes.b1]);
        }
    }
    MonomialTerm::new(coeff, slots, f.clone())
}

/// The binomial components `(ψ_nm, (−1)^{n−m} C(n,m))` of
/// `f:(a₁†b₂† − a₂†b₁†)ⁿ|0⟩`, unnormalized.
pub fn qkd_components(modes: &PairModes, f: &SpectralAmplitude, n: usize) -> Result<Vec<(usize, MonomialTerm)>> {
    if f.arity() != 2 * n {
        return Err(Error::ArityMismatch { expected: 2 * n, found: f.arity() });
    }
    (0..=n)
        .map(|m| {
            let sign = if (n - m) % 2 == 0 { 1.0 } else { -1.0 };
            Ok((m, psi_nm_term(modes, f, n, m, Complex64::new(sign * binomial(n, m), 0.0))?))
        })
        .collect()
}

/// Normalized `ψ_n` for the pair-kernel power `g^{⊗n}`.
pub fn qkd_psi_n(modes: &PairModes, g: &SpectralAmplitude, n: usize) -> Result<StateVector> {
    if g.arity() != 2 {
        return Err(Error::ArityMismatch { expected: 2, found: g.arity() });
    }
    qkd_from_amplitude(modes, &g.power(n), n)
}

/// Normalized `ψ_n` for a dense `2n`-argument amplitude; it is first
/// symmetrized over permutations of the argument pairs.
pub fn qkd_psi_n_dense(modes: &PairModes, f: &SpectralAmplitude, n: usize) -> Result<StateVector> {
    if f.arity() != 2 * n {
        return Err(Error::ArityMismatch { expected: 2 * n, found: f.arity() });
    }
    let pairs: Vec<Vec<usize>> = (0..n).map(|j| vec![2 * j, 2 * j + 1]).collect();
    let sym = f.densify(DEFAULT_DENSE_CAP)?.symmetrize_vectors(&pairs)?;
    qkd_from_amplitude(modes, &sym, n)
}

fn qkd_from_amplitude(modes: &PairModes, f: &SpectralAmplitude, n: usize) -> Result<StateVector> {
    let terms: Vec<MonomialTerm> = qkd_components(modes, f, n)?.into_iter().map(|(_, t)| t).collect();
    let psi = StateVector::from_terms(f.grid().clone(), terms)?;
    let norm = norm_squared(&psi, &ModeOverlap::orthogonal())?;
    if !(norm > 0.0) {
        return Err(Error::NotNormalized { norm_sq: norm, tol: NORM_TOL });
    }
    Ok(psi.scaled(Complex64::new(1.0 / norm.sqrt(), 0.0)))
}

/// Photon counts `(a₁, a₂, b₁, b₂)` of a general two-fiber state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub a1: usize,
    pub a2: usize,
    pub b1: usize,
    pub b2: usize,
}

/// `(j!(m−j)!k!(n−k)!)^{-1/2} (h: a₁†ʲ a₂†^{m−j} b₁†ᵏ b₂†^{n−k})|0⟩` with `h`
/// over the `m` a-arguments followed by the `n` b-arguments. `h` is
/// symmetrized within each fiber's group and must then have unit norm.
pub fn general_multi_mode(modes: &PairModes, h: &SpectralAmplitude, counts: PairCounts) -> Result<StateVector> {
    let m = counts.a1 + counts.a2;
    let n = counts.b1 + counts.b2;
    if h.arity() != m + n {
        return Err(Error::ArityMismatch { expected: m + n, found: h.arity() });
    }
    let groups = vec![(0..m).collect::<Vec<_>>(), (m..m + n).collect()];
    let sym = if groups.iter().all(|g| g.len() < 2) { h.clone() } else { h.symmetrize(&groups)? };
    let mut slots = vec![modes.a1; counts.a1];
    slots.extend(std::iter::repeat_n(modes.a2, counts.a2));
    slots.extend(std::iter::repeat_n(modes.b1, counts.b1));
    slots.extend(std::iter::repeat_n(modes.b2, counts.b2));
    let pre = [counts.a1, counts.a2, counts.b1, counts.b2].iter().map(|&k| factorial(k)).product::<f64>();
    let psi = StateVector::monomial(Complex64::new(1.0 / pre.sqrt(), 0.0), slots, sym)?;
    require_unit_state(&psi)?;
    Ok(psi)
}
