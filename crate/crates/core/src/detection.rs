//! Photon-number projectors, APD detection and gated quadratic forms.
//!
//! An APD over a mode scope fails to click on an `n`-photon component with
//! probability `(1 − p_dark)(1 − η)^n`. Because the no-click element `M₀` is
//! diagonal in per-mode photon number, it acts on a creation monomial as a
//! scalar, so every outcome probability reduces to coefficient rescalings of
//! the state and one Gram matrix of its terms.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{gram_matrix, inner_product, ModeId, ModeOverlap, OneBodyOperator, StateVector};
use crate::error::{Error, Result};
use crate::spectral::{AxisKernel, FrequencyGrid, SpectralAmplitude};

/// Rounding budget for probabilities assembled by inclusion-exclusion.
pub const PROBABILITY_EPS: f64 = 1e-10;

/// Tolerance on `|⟨ψ|ψ⟩ − 1|` for inputs that must be normalized.
pub const STATE_NORM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApdModel {
    pub eta_det: f64,
    pub p_dark: f64,
    pub scope: Vec<ModeId>,
}

impl ApdModel {
    pub fn new(eta_det: f64, p_dark: f64, scope: Vec<ModeId>) -> Result<Self> {
        for (name, v) in [("eta_det", eta_det), ("p_dark", p_dark)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if scope.is_empty() {
            return Err(Error::Invalid("detector scope is empty".into()));
        }
        Ok(ApdModel { eta_det, p_dark, scope })
    }

    /// No-click probability given `n` photons in scope.
    pub fn miss_given_n(&self, n: usize) -> f64 {
        (1.0 - self.p_dark) * (1.0 - self.eta_det).powi(n as i32)
    }

    pub fn covers(&self, m: ModeId) -> bool {
        self.scope.contains(&m)
    }
}

/// Click probability given `n` photons: `1 − (1 − p_dark)(1 − η)^n`.
pub fn pr_detect_given_n(model: &ApdModel, n: usize) -> f64 {
    1.0 - model.miss_given_n(n)
}

/// Indices into a detector list: `no_detect` must stay silent, `detect`
/// must click; detectors in neither list are unconstrained.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub no_detect: Vec<usize>,
    pub detect: Vec<usize>,
}

impl OutcomeSpec {
    /// Full pattern over `count` detectors; bit `d` set means detector `d`
    /// clicks.
    pub fn from_mask(mask: u64, count: usize) -> Self {
        let (detect, no_detect) = (0..count).partition(|&d| mask >> d & 1 == 1);
        OutcomeSpec { no_detect, detect }
    }
}

/// Keeps the components with exactly `n` photons in `scope`.
pub fn projector_apply(psi: &StateVector, scope: &[ModeId], n: usize) -> StateVector {
    psi.filter(|t| t.photons_in(scope) == n)
}

/// `M₀` of one detector: each term is scaled by `(1 − p)(1 − η)^n`.
pub fn apply_m0(psi: &StateVector, model: &ApdModel) -> StateVector {
    psi.map_coeffs(|t| Complex64::new(model.miss_given_n(t.photons_in(&model.scope)), 0.0))
}

/// Square-root split of `M₀` over a list of detectors:
/// `Π_d √(1 − p_d) (1 − η_d)^{n_d/2}`. Its squared norm is `⟨M₀(L)⟩`.
pub fn apply_m0_sqrt(psi: &StateVector, models: &[&ApdModel]) -> StateVector {
    psi.map_coeffs(|t| {
        let s: f64 = models.iter().map(|m| m.miss_given_n(t.photons_in(&m.scope)).sqrt()).product();
        Complex64::new(s, 0.0)
    })
}

fn check_disjoint(detectors: &[ApdModel], registry_name: impl Fn(ModeId) -> String) -> Result<()> {
    for (i, a) in detectors.iter().enumerate() {
        for b in &detectors[i + 1..] {
            if let Some(m) = a.scope.iter().find(|m| b.covers(**m)) {
                return Err(Error::OverlappingScopes(registry_name(*m)));
            }
        }
    }
    Ok(())
}

fn check_normalized(psi: &StateVector, overlaps: &ModeOverlap) -> Result<f64> {
    let n = inner_product(psi, psi, overlaps)?.re;
    if (n - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::NotNormalized { norm_sq: n, tol: STATE_NORM_TOL });
    }
    Ok(n)
}

pub(crate) fn clamp_probability(p: f64) -> Result<f64> {
    if p < -PROBABILITY_EPS || p > 1.0 + PROBABILITY_EPS || !p.is_finite() {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Caches the term Gram matrix of a state so every outcome of a detector set
/// costs one quadratic form.
pub struct DetectionEvaluator {
    detectors: Vec<ApdModel>,
    coeffs: Vec<Complex64>,
    gram: Vec<Complex64>,
    /// `counts[t][d]`: photons of term `t` in detector `d`'s scope.
    counts: Vec<Vec<usize>>,
}

impl DetectionEvaluator {
    pub fn new(psi: &StateVector, detectors: &[ApdModel]) -> Result<Self> {
        Self::with_overlaps(psi, detectors, &ModeOverlap::orthogonal())
    }

    pub fn with_overlaps(psi: &StateVector, detectors: &[ApdModel], overlaps: &ModeOverlap) -> Result<Self> {
        check_disjoint(detectors, |m| m.to_string())?;
        let gram = gram_matrix(psi, overlaps)?;
        let coeffs: Vec<Complex64> = psi.terms().iter().map(|t| t.coeff()).collect();
        let n = coeffs.len();
        let norm: f64 = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| (coeffs[a].conj() * coeffs[b] * gram[a * n + b]).re).sum();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::NotNormalized { norm_sq: norm, tol: STATE_NORM_TOL });
        }
        let counts = psi.terms().iter().map(|t| detectors.iter().map(|d| t.photons_in(&d.scope)).collect()).collect();
        Ok(DetectionEvaluator { detectors: detectors.to_vec(), coeffs, gram, counts })
    }

    pub fn detectors(&self) -> &[ApdModel] {
        &self.detectors
    }

    fn quadratic(&self, scale: impl Fn(usize) -> f64) -> f64 {
        let n = self.coeffs.len();
        let s: Vec<f64> = (0..n).map(&scale).collect();
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let g = self.gram[a * n + b];
                if g != Complex64::new(0.0, 0.0) {
                    acc += (self.coeffs[a].conj() * self.coeffs[b] * g).re * s[b];
                }
            }
        }
        acc
    }

    /// `⟨ψ| Π_{d∈list} M₀(d) |ψ⟩`.
    pub fn m0_expectation(&self, list: &[usize]) -> f64 {
        self.quadratic(|t| list.iter().map(|&d| self.detectors[d].miss_given_n(self.counts[t][d])).product())
    }

    /// Inclusion-exclusion over the clicking detectors.
    pub fn outcome_probability(&self, spec: &OutcomeSpec) -> Result<f64> {
        let all: Vec<usize> = spec.no_detect.iter().chain(&spec.detect).copied().collect();
        if all.iter().any(|&d| d >= self.detectors.len()) {
            return Err(Error::Invalid("outcome refers to an unknown detector".into()));
        }
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(Error::Invalid("detector listed twice in one outcome".into()));
        }
        let k = spec.detect.len();
        let mut total = 0.0;
        for x in 0u64..(1u64 << k) {
            let mut list = spec.no_detect.clone();
            list.extend((0..k).filter(|&i| x >> i & 1 == 1).map(|i| spec.detect[i]));
            let sign = if x.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * self.m0_expectation(&list);
        }
        clamp_probability(total)
    }

    /// Probabilities of all `2^D` click patterns, indexed by bitmask.
    pub fn outcome_table(&self) -> Result<Vec<f64>> {
        let d = self.detectors.len();
        (0..1u64 << d).into_par_iter().map(|mask| self.outcome_probability(&OutcomeSpec::from_mask(mask, d))).collect()
    }

    /// Click probability of detector `d` alone.
    pub fn marginal(&self, d: usize) -> Result<f64> {
        self.outcome_probability(&OutcomeSpec { no_detect: Vec::new(), detect: vec![d] })
    }

    /// Mean photon number in detector `d`'s scope.
    pub fn mean_photons(&self, d: usize) -> f64 {
        self.quadratic(|t| self.counts[t][d] as f64)
    }
}

pub fn outcome_probability(psi: &StateVector, detectors: &[ApdModel], spec: &OutcomeSpec) -> Result<f64> {
    DetectionEvaluator::new(psi, detectors)?.outcome_probability(spec)
}

/// `Σ_n n ‖P_n ψ‖²` over `scope`.
pub fn number_expectation(psi: &StateVector, scope: &[ModeId]) -> Result<f64> {
    let overlaps = ModeOverlap::orthogonal();
    check_normalized(psi, &overlaps)?;
    let max = psi.terms().iter().map(|t| t.photons_in(scope)).max().unwrap_or(0);
    let mut acc = 0.0;
    for n in 1..=max {
        let block = projector_apply(psi, scope, n);
        acc += n as f64 * inner_product(&block, &block, &overlaps)?.re;
    }
    Ok(acc)
}

/// Per photon-number block in `model`'s scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberBlock {
    pub photons: usize,
    pub weight: f64,
    pub pr_detect: f64,
}

/// Splits `Pr(click)` into photon-number blocks; the blocks do not
/// interfere because `M₀` is diagonal in photon number.
pub fn no_cross_terms_decomposition(psi: &StateVector, model: &ApdModel) -> Result<Vec<NumberBlock>> {
    let overlaps = ModeOverlap::orthogonal();
    check_normalized(psi, &overlaps)?;
    let mut ns: Vec<usize> = psi.terms().iter().map(|t| t.photons_in(&model.scope)).collect();
    ns.sort();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let block = projector_apply(psi, &model.scope, n);
            let weight = inner_product(&block, &block, &overlaps)?.re;
            Ok(NumberBlock { photons: n, weight, pr_detect: pr_detect_given_n(model, n) })
        })
        .collect()
}

/// Linearized click probability `p + (1 − p) η ⟨Q⟩` with `Q` a one-body
/// operator (photon number, or a gated quadratic form).
pub fn linear_response_probability(psi: &StateVector, model: &ApdModel, q: &OneBodyOperator) -> Result<f64> {
    let e = q.expectation(psi, &ModeOverlap::orthogonal())?.re;
    Ok(model.p_dark + (1.0 - model.p_dark) * model.eta_det * e)
}

/// `|⟨Π_j a_{g_j}† 0 | ψ⟩|²` for filter functions `g_j` on modes. Filters
/// sharing a mode must be orthonormal.
pub fn filtered_detector_probability(psi: &StateVector, filters: &[(ModeId, SpectralAmplitude)]) -> Result<f64> {
    for (i, (m, g)) in filters.iter().enumerate() {
        for (k, (m2, g2)) in filters.iter().enumerate().skip(i) {
            if m != m2 {
                continue;
            }
            let want = if i == k { 1.0 } else { 0.0 };
            if (SpectralAmplitude::inner(g, g2)? - want).norm() > 1e-9 {
                return Err(Error::NonOrthonormalFilters(m.to_string()));
            }
        }
    }
    let grid = psi.grid().clone();
    let mut amp = SpectralAmplitude::unit(grid.clone());
    for (_, g) in filters {
        amp = amp.tensor(g)?;
    }
    let bra = StateVector::monomial(Complex64::new(1.0, 0.0), filters.iter().map(|f| f.0).collect(), amp)?;
    Ok(inner_product(&bra, psi, &ModeOverlap::orthogonal())?.norm_sqr())
}

/// A detector gated on for `duration` around `center`, at position `x`, on
/// a mode with propagation constants `k(ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateWindow {
    pub center: f64,
    pub duration: f64,
    pub x: f64,
    pub k: Vec<f64>,
    /// `+1` for forward propagation, `−1` for backward.
    pub sign: f64,
}

impl GateWindow {
    pub fn new(center: f64, duration: f64, x: f64, k: Vec<f64>, sign: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::OutOfRange(format!("gate duration must be positive, got {duration}")));
        }
        Ok(GateWindow { center, duration, x, k, sign })
    }

    /// Window at `x = 0`, where the propagation phase drops out.
    pub fn at_origin(center: f64, duration: f64, bins: usize) -> Result<Self> {
        Self::new(center, duration, 0.0, vec![0.0; bins], 1.0)
    }
}

/// `K(ω, ω′) = e^{i[(ω−ω′)t_g ∓ (k(ω)−k(ω′))x]} sin((ω−ω′)T/2) / (π(ω−ω′))`,
/// with diagonal `T/(2π)`.
pub fn gated_kernel(window: &GateWindow, grid: &Arc<FrequencyGrid>) -> Result<AxisKernel> {
    let nodes = grid.nodes();
    let b = nodes.len();
    if window.k.len() != b {
        return Err(Error::GridMismatch(format!("{} propagation constants for {b} bins", window.k.len())));
    }
    let mut data = Vec::with_capacity(b * b);
    for i in 0..b {
        for j in 0..b {
            let d = nodes[i] - nodes[j];
            let mag = if i == j {
                window.duration / (2.0 * std::f64::consts::PI)
            } else {
                (d * window.duration / 2.0).sin() / (std::f64::consts::PI * d)
            };
            let phase = d * window.center - window.sign * (window.k[i] - window.k[j]) * window.x;
            data.push(Complex64::from_polar(mag, phase));
        }
    }
    Ok(AxisKernel::Full(data))
}

/// Gated photon-number operator on `scope`.
pub fn gated_operator(window: &GateWindow, grid: &Arc<FrequencyGrid>, scope: Vec<ModeId>) -> Result<OneBodyOperator> {
    Ok(OneBodyOperator::new(Some(scope), gated_kernel(window, grid)?))
}
