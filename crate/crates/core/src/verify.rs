//! Randomized engine-versus-oracle cross-check: random few-photon states on
//! a two-bin grid pass through a random unitary network and are detected by
//! random disjoint APDs. Every outcome probability must match the dense-Fock
//! oracle.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{norm_squared, ModeId, ModeOverlap, MonomialTerm, StateVector};
use crate::channels::{apply_channel, haar_unitary, CMatrix, UnitaryField};
use crate::detection::{ApdModel, DetectionEvaluator};
use crate::error::Result;
use crate::oracle::DenseFockSpace;
use crate::spectral::{FrequencyGrid, Quadrature, SpectralAmplitude};

pub const VERIFY_TOL: f64 = 1e-8;
pub const DEFAULT_CASES: usize = 200;

const BINS: usize = 2;
const MAX_MODES: usize = 3;
const MAX_PHOTONS: usize = 3;

#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub index: usize,
    pub modes: usize,
    pub photons: usize,
    pub detectors: usize,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub tolerance: f64,
    pub cases: Vec<CaseReport>,
}

impl VerifyReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.cases.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&CaseReport> {
        self.cases.iter().filter(|c| !(c.max_abs_diff <= self.tolerance)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Runs `cases` random cross-checks. Each case has its own RNG stream, so a
/// case's content depends only on `seed` and its index.
pub fn verify(seed: u64, cases: usize) -> Result<VerifyReport> {
    let cases = (0..cases).into_par_iter().map(|i| run_case(seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { seed, tolerance: VERIFY_TOL, cases })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian_c(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

fn random_state(rng: &mut ChaCha8Rng, grid: &Arc<FrequencyGrid>, modes: &[ModeId]) -> Result<StateVector> {
    let n_terms = rng.random_range(1..=3);
    let mut terms = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let n = rng.random_range(0..=MAX_PHOTONS);
        let slots: Vec<ModeId> = (0..n).map(|_| modes[rng.random_range(0..modes.len())]).collect();
        let amp = if n == 0 {
            SpectralAmplitude::unit(grid.clone())
        } else if rng.random_bool(0.5) {
            let data = (0..BINS.pow(n as u32)).map(|_| gaussian_c(rng)).collect();
            SpectralAmplitude::dense(grid.clone(), n, data)?
        } else {
            let parts = (0..n)
                .map(|_| SpectralAmplitude::from_samples(grid.clone(), (0..BINS).map(|_| gaussian_c(rng)).collect()))
                .collect::<Result<Vec<_>>>()?;
            SpectralAmplitude::factored(&parts)?
        };
        terms.push(MonomialTerm::new(gaussian_c(rng), slots, amp)?);
    }
    let psi = StateVector::from_terms(grid.clone(), terms)?;
    let norm = norm_squared(&psi, &ModeOverlap::orthogonal())?;
    if norm < 1e-6 {
        // cancellation left (almost) nothing; fall back to the vacuum
        return StateVector::monomial(c(1.0, 0.0), Vec::new(), SpectralAmplitude::unit(grid.clone()));
    }
    Ok(psi.scaled(c(1.0 / norm.sqrt(), 0.0)))
}

fn random_detectors(rng: &mut ChaCha8Rng, modes: &[ModeId]) -> Result<Vec<ApdModel>> {
    let d = rng.random_range(1..=modes.len());
    let mut shuffled = modes.to_vec();
    shuffled.shuffle(rng);
    // each detector takes one mode; leftover modes join a random detector or stay dark
    let mut scopes: Vec<Vec<ModeId>> = shuffled[..d].iter().map(|&m| vec![m]).collect();
    for &m in &shuffled[d..] {
        if rng.random_bool(0.5) {
            let k = rng.random_range(0..d);
            scopes[k].push(m);
        }
    }
    scopes
        .into_iter()
        .map(|s| {
            let eta = if rng.random_bool(0.2) { 1.0 } else { rng.random::<f64>() };
            let p_dark = if rng.random_bool(0.5) { 0.0 } else { 0.2 * rng.random::<f64>() };
            ApdModel::new(eta, p_dark, s)
        })
        .collect()
}

fn run_case(seed: u64, index: usize) -> Result<CaseReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let quad = if rng.random_bool(0.5) { Quadrature::Midpoint } else { Quadrature::Trapezoid };
    let grid = Arc::new(FrequencyGrid::with_quadrature(1.0, 2.0, BINS, quad)?);
    let m = rng.random_range(1..=MAX_MODES);
    let modes: Vec<ModeId> = (0..m as u32).map(ModeId).collect();
    let psi = random_state(&mut rng, &grid, &modes)?;
    let channel = if rng.random_bool(0.5) {
        let mats: Vec<CMatrix> = (0..BINS).map(|_| haar_unitary(m, &mut rng)).collect();
        UnitaryField::per_bin(modes.clone(), modes.clone(), mats)?
    } else {
        UnitaryField::flat(modes.clone(), modes.clone(), haar_unitary(m, &mut rng))?
    };
    let detectors = random_detectors(&mut rng, &modes)?;

    let out = apply_channel(&psi, &channel)?;
    let engine = DetectionEvaluator::new(&out, &detectors)?.outcome_table()?;

    let space = DenseFockSpace::new(&modes, &grid, MAX_PHOTONS)?;
    let dense = space.apply_substitution(&space.embed(&psi)?, &channel.substitution(BINS)?)?;
    let mut max_abs_diff: f64 = 0.0;
    for (mask, p) in engine.iter().enumerate() {
        let spec: Vec<(ApdModel, bool)> =
            detectors.iter().enumerate().map(|(d, det)| (det.clone(), mask >> d & 1 == 1)).collect();
        max_abs_diff = max_abs_diff.max((p - space.outcome_probability(&dense, &spec)).abs());
    }
    Ok(CaseReport { index, modes: m, photons: psi.max_photons(), detectors: detectors.len(), max_abs_diff })
}
