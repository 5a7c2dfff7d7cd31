//! Brute-force reference: a truncated Fock space over (mode, bin) sites.
//!
//! Site operators are the normalized `A_p = √w_p a(ω_p)` with
//! `[A_p, A_q†] = δ_pq`, so `a(ω_p) = A_p / √w_p` reproduces the discrete
//! commutator `δ_pq / w_p`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::algebra::{ModeId, StateVector, Substitution};
use crate::detection::ApdModel;
use crate::error::{Error, Result};
use crate::spectral::FrequencyGrid;

pub const MAX_MODES: usize = 4;
pub const MAX_BINS: usize = 3;
pub const MAX_CUTOFF: usize = 4;
pub const DEFAULT_DIM_CAP: usize = 20_000;

pub type DenseState = DVector<Complex64>;
pub type DenseOperator = DMatrix<Complex64>;

#[derive(Clone, Debug)]
pub struct DenseFockSpace {
    modes: Vec<ModeId>,
    bins: usize,
    cutoff: usize,
    weights: Vec<f64>,
    basis: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl DenseFockSpace {
    pub fn new(modes: &[ModeId], grid: &FrequencyGrid, cutoff: usize) -> Result<Self> {
        Self::with_cap(modes, grid, cutoff, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(modes: &[ModeId], grid: &FrequencyGrid, cutoff: usize, cap: usize) -> Result<Self> {
        Self::build(modes, grid.weights(), cutoff, cap)
    }

    fn build(modes: &[ModeId], weights: &[f64], cutoff: usize, cap: usize) -> Result<Self> {
        if modes.len() > MAX_MODES || weights.len() > MAX_BINS || cutoff > MAX_CUTOFF {
            return Err(Error::OutOfRange(format!(
                "oracle limits are {MAX_MODES} modes, {MAX_BINS} bins, cutoff {MAX_CUTOFF}; got {}, {}, {cutoff}",
                modes.len(),
                weights.len()
            )));
        }
        let sites = modes.len() * weights.len();
        let dim: usize = (0..=cutoff).map(|k| binomial(k + sites.max(1) - 1, k)).sum();
        if dim > cap {
            return Err(Error::OracleCapExceeded { dim, cap });
        }
        let mut basis = Vec::with_capacity(dim);
        for total in 0..=cutoff {
            let mut occ = vec![0u8; sites];
            compositions(total, 0, &mut occ, &mut basis);
        }
        let index = basis.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        Ok(DenseFockSpace {
            modes: modes.to_vec(),
            bins: weights.len(),
            cutoff,
            weights: weights.to_vec(),
            basis,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn basis(&self) -> &[Vec<u8>] {
        &self.basis
    }

    pub fn site(&self, mode: ModeId, bin: usize) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode).map(|k| k * self.bins + bin)
    }

    fn site_or_err(&self, mode: ModeId, bin: usize) -> Result<usize> {
        self.site(mode, bin).ok_or_else(|| Error::OutsideTruncation(format!("mode {mode} not in oracle space")))
    }

    pub fn vacuum(&self) -> DenseState {
        let mut v = DenseState::zeros(self.dim());
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// `A_p† v`, dropping components beyond the cutoff.
    pub fn raise(&self, site: usize, v: &DenseState) -> DenseState {
        let mut out = DenseState::zeros(self.dim());
        for (i, o) in self.basis.iter().enumerate() {
            if v[i] == zero() {
                continue;
            }
            let mut up = o.clone();
            up[site] += 1;
            if let Some(&k) = self.index.get(&up) {
                out[k] += v[i] * (up[site] as f64).sqrt();
            }
        }
        out
    }

    /// `A_p v`.
    pub fn lower(&self, site: usize, v: &DenseState) -> DenseState {
        let mut out = DenseState::zeros(self.dim());
        for (i, o) in self.basis.iter().enumerate() {
            if v[i] == zero() || o[site] == 0 {
                continue;
            }
            let mut down = o.clone();
            down[site] -= 1;
            out[self.index[&down]] += v[i] * (o[site] as f64).sqrt();
        }
        out
    }

    /// Matrix of `a†(ω_bin)` for `mode`.
    pub fn creation_matrix(&self, mode: ModeId, bin: usize) -> Result<DenseOperator> {
        let p = self.site_or_err(mode, bin)?;
        let scale = 1.0 / self.weights[bin].sqrt();
        let mut m = DenseOperator::zeros(self.dim(), self.dim());
        for (i, o) in self.basis.iter().enumerate() {
            let mut up = o.clone();
            up[p] += 1;
            if let Some(&k) = self.index.get(&up) {
                m[(k, i)] = Complex64::new((up[p] as f64).sqrt() * scale, 0.0);
            }
        }
        Ok(m)
    }

    pub fn annihilation_matrix(&self, mode: ModeId, bin: usize) -> Result<DenseOperator> {
        Ok(self.creation_matrix(mode, bin)?.adjoint())
    }

    /// Occupation vector coordinates of `psi`.
    pub fn embed(&self, psi: &StateVector) -> Result<DenseState> {
        let mut v = DenseState::zeros(self.dim());
        for t in psi.terms() {
            for (k, bins, scale) in self.expand_slots(t.slots(), psi.grid())? {
                v[k] += t.coeff() * t.amplitude().value(&bins) * scale;
            }
        }
        Ok(v)
    }

    /// For every bin assignment of `slots`: the basis index it lands on,
    /// the bins, and the factor `Π √w · √Π occ!` relating amplitude samples
    /// to occupation coordinates.
    pub fn expand_slots(&self, slots: &[ModeId], grid: &FrequencyGrid) -> Result<Vec<(usize, Vec<usize>, f64)>> {
        if grid.bins() != self.bins || grid.weights() != self.weights.as_slice() {
            return Err(Error::GridMismatch("state grid differs from oracle grid".into()));
        }
        let n = slots.len();
        if n > self.cutoff {
            return Err(Error::OutsideTruncation(format!("{n} photons above cutoff {}", self.cutoff)));
        }
        let b = self.bins;
        let sites: Vec<usize> = slots.iter().map(|&m| self.site_or_err(m, 0)).collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(b.pow(n as u32));
        let mut idx = vec![0usize; n];
        for _ in 0..b.pow(n as u32) {
            let mut occ = vec![0u8; self.basis[0].len()];
            let mut scale = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                occ[sites[j] + i] += 1;
                scale *= self.weights[i].sqrt();
            }
            let norm: f64 = occ.iter().map(|&k| factorial(k as usize)).product::<f64>().sqrt();
            out.push((self.index[&occ], idx.clone(), scale * norm));
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < b {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// Photon count in `scope` for each basis vector.
    pub fn counts(&self, scope: &[ModeId]) -> Vec<usize> {
        let sites: Vec<usize> = scope
            .iter()
            .filter_map(|&m| self.modes.iter().position(|&x| x == m))
            .flat_map(|k| (0..self.bins).map(move |i| k * self.bins + i))
            .collect();
        self.basis.iter().map(|o| sites.iter().map(|&s| o[s] as usize).sum()).collect()
    }

    /// Diagonal of the APD detect (or no-detect) POVM element.
    pub fn apd_diagonal(&self, model: &ApdModel, detect: bool) -> Vec<f64> {
        self.counts(&model.scope)
            .into_iter()
            .map(|n| {
                let miss = (1.0 - model.p_dark) * (1.0 - model.eta_det).powi(n as i32);
                if detect {
                    1.0 - miss
                } else {
                    miss
                }
            })
            .collect()
    }

    /// The APD POVM element as an explicit matrix.
    pub fn dense_povm(&self, model: &ApdModel, detect: bool) -> DenseOperator {
        let d = self.apd_diagonal(model, detect);
        DenseOperator::from_diagonal(&DVector::from_iterator(d.len(), d.into_iter().map(|x| Complex64::new(x, 0.0))))
    }

    /// `⟨ψ| Π_d M_d |ψ⟩` for diagonal detector elements.
    pub fn outcome_probability(&self, psi: &DenseState, detectors: &[(ApdModel, bool)]) -> f64 {
        let diags: Vec<Vec<f64>> = detectors.iter().map(|(m, d)| self.apd_diagonal(m, *d)).collect();
        (0..self.dim()).map(|i| psi[i].norm_sqr() * diags.iter().map(|d| d[i]).product::<f64>()).sum()
    }

    pub fn outcome_probability_rho(&self, rho: &DenseOperator, detectors: &[(ApdModel, bool)]) -> f64 {
        let diags: Vec<Vec<f64>> = detectors.iter().map(|(m, d)| self.apd_diagonal(m, *d)).collect();
        (0..self.dim()).map(|i| rho[(i, i)].re * diags.iter().map(|d| d[i]).product::<f64>()).sum()
    }

    /// Applies the Fock-space map induced by a substitution on creation
    /// operators (a homomorphism of the creation algebra).
    pub fn apply_substitution(&self, v: &DenseState, rule: &Substitution) -> Result<DenseState> {
        let mut out = DenseState::zeros(self.dim());
        for (i, o) in self.basis.iter().enumerate() {
            if v[i] == zero() {
                continue;
            }
            let mut img = self.vacuum() * v[i];
            for (p, &k) in o.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let (mode, bin) = (self.modes[p / self.bins], p % self.bins);
                let targets = rule.targets(mode).ok_or_else(|| Error::UnknownMode(format!("{mode} has no rule")))?;
                for _ in 0..k {
                    let mut next = DenseState::zeros(self.dim());
                    for (y, c) in targets {
                        next += self.raise(self.site_or_err(*y, bin)?, &img) * c.at(bin);
                    }
                    img = next;
                }
                img /= Complex64::new(factorial(k as usize).sqrt(), 0.0);
            }
            out += img;
        }
        Ok(out)
    }

    /// Reduced operator on `keep`, with its space (same bins and cutoff).
    pub fn partial_trace(&self, rho: &DenseOperator, keep: &[ModeId]) -> Result<(DenseFockSpace, DenseOperator)> {
        for m in keep {
            if !self.modes.contains(m) {
                return Err(Error::UnknownMode(m.to_string()));
            }
        }
        let kept: Vec<ModeId> = self.modes.iter().copied().filter(|m| keep.contains(m)).collect();
        let sub = DenseFockSpace::build(&kept, &self.weights, self.cutoff, usize::MAX)?;
        let kept_sites: Vec<usize> = kept
            .iter()
            .flat_map(|m| {
                let k = self.modes.iter().position(|x| x == m).unwrap();
                (0..self.bins).map(move |i| k * self.bins + i)
            })
            .collect();
        let mut groups: HashMap<Vec<u8>, Vec<(usize, usize)>> = HashMap::new();
        for (i, o) in self.basis.iter().enumerate() {
            let kept_occ: Vec<u8> = kept_sites.iter().map(|&s| o[s]).collect();
            let traced: Vec<u8> = (0..o.len()).filter(|s| !kept_sites.contains(s)).map(|s| o[s]).collect();
            groups.entry(traced).or_default().push((i, sub.index[&kept_occ]));
        }
        let mut out = DenseOperator::zeros(sub.dim(), sub.dim());
        for members in groups.values() {
            for &(i, a) in members {
                for &(j, b) in members {
                    out[(a, b)] += rho[(i, j)];
                }
            }
        }
        Ok((sub, out))
    }
}

fn compositions(left: usize, pos: usize, occ: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 >= occ.len() {
        if let Some(last) = occ.last_mut() {
            *last = left as u8;
            out.push(occ.clone());
            *occ.last_mut().unwrap() = 0;
        } else if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=left).rev() {
        occ[pos] = k as u8;
        compositions(left - k, pos + 1, occ, out);
    }
    occ[pos] = 0;
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn outer(v: &DenseState) -> DenseOperator {
    v * v.adjoint()
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn sqrt_psd(rho: &DenseOperator) -> DenseOperator {
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DenseOperator::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(rho: &DenseOperator) -> Vec<f64> {
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// `Tr(√ρ₁ √ρ₂)`.
pub fn fidelity_overlap(rho1: &DenseOperator, rho2: &DenseOperator) -> f64 {
    let (a, b) = (sqrt_psd(rho1), sqrt_psd(rho2));
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * b[(j, i)]).sum::<Complex64>()).sum::<Complex64>().re
}
