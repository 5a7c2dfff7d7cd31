//! Density operators as sums of vacuum dyads
//! `c ∫ K(ω…, ω′…) Π x†(ω)|0⟩⟨0| Π y(ω′)`.
//!
//! Each term is stored as a monomial whose slots are the ket modes followed
//! by the tagged bra modes, with the joint kernel over ket arguments then
//! bra arguments (already conjugated on the bra side). Canonicalization and
//! merging are then shared with state vectors.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{contract_full, merge_terms, pairings, ModeId, ModeOverlap, MonomialTerm, OneBodyOperator, StateVector};
use crate::detection::{clamp_probability, ApdModel, OutcomeSpec};
use crate::error::{Error, Result};
use crate::oracle::{self, DenseFockSpace, DenseOperator};
use crate::spectral::{same_grid, AxisKernel, Factor, FrequencyGrid, SpectralAmplitude};
use crate::tensor::{self, Label, LTensor};

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// One dyad, unpacked.
#[derive(Clone, Debug)]
pub struct DensityTerm {
    pub coeff: Complex64,
    pub ket: Vec<ModeId>,
    pub bra: Vec<ModeId>,
    /// Arguments: ket slots, then bra slots.
    pub kernel: SpectralAmplitude,
}

#[derive(Clone, Debug)]
pub struct DensityOp {
    grid: Arc<FrequencyGrid>,
    terms: Vec<MonomialTerm>,
}

/// Quantities whose trace against a density operator is supported.
#[derive(Clone, Debug)]
pub enum Observable {
    Identity,
    /// Projector onto exactly `n` photons in `scope`.
    Projector { scope: Vec<ModeId>, n: usize },
    Number { scope: Vec<ModeId> },
    /// APD outcome element over a detector set.
    Outcome { detectors: Vec<ApdModel>, outcome: OutcomeSpec },
    OneBody(OneBodyOperator),
}

fn ket_len(t: &MonomialTerm) -> usize {
    t.slots.iter().take_while(|m| !m.is_tagged()).count()
}

fn split(t: &MonomialTerm) -> (Vec<ModeId>, Vec<ModeId>) {
    let nk = ket_len(t);
    (t.slots[..nk].to_vec(), t.slots[nk..].iter().map(|m| m.untagged()).collect())
}

fn dyad(coeff: Complex64, ket: &[ModeId], bra: &[ModeId], kernel: SpectralAmplitude) -> MonomialTerm {
    let mut slots = ket.to_vec();
    slots.extend(bra.iter().map(|m| m.tagged()));
    let mut t = MonomialTerm { coeff, slots, amplitude: kernel };
    t.canonicalize();
    t
}

impl DensityOp {
    pub fn zero(grid: Arc<FrequencyGrid>) -> Self {
        DensityOp { grid, terms: Vec::new() }
    }

    /// `|0⟩⟨0|`.
    pub fn vacuum(grid: Arc<FrequencyGrid>) -> Self {
        let unit = SpectralAmplitude::unit(grid.clone());
        DensityOp { grid, terms: vec![dyad(one(), &[], &[], unit)] }
    }

    /// `w |ket⟩⟨bra|`.
    pub fn outer(weight: Complex64, ket: &StateVector, bra: &StateVector) -> Result<Self> {
        if !same_grid(ket.grid(), bra.grid()) {
            return Err(Error::GridMismatch("ket and bra live on different grids".into()));
        }
        let mut terms = Vec::with_capacity(ket.terms().len() * bra.terms().len());
        for k in ket.terms() {
            for b in bra.terms() {
                let kernel = k.amplitude.tensor(&b.amplitude.conj())?;
                terms.push(dyad(weight * k.coeff * b.coeff.conj(), &k.slots, &b.slots, kernel));
            }
        }
        Ok(DensityOp { grid: ket.grid().clone(), terms: merge_terms(terms) })
    }

    pub fn pure(psi: &StateVector) -> Result<Self> {
        Self::outer(one(), psi, psi)
    }

    /// Adds one dyad given as a joint kernel over ket then bra arguments.
    pub fn push(&mut self, term: DensityTerm) -> Result<()> {
        if !same_grid(term.kernel.grid(), &self.grid) {
            return Err(Error::GridMismatch("dyad kernel grid differs".into()));
        }
        let n = term.ket.len() + term.bra.len();
        if term.kernel.arity() != n {
            return Err(Error::ArityMismatch { expected: n, found: term.kernel.arity() });
        }
        let mut terms = std::mem::take(&mut self.terms);
        terms.push(dyad(term.coeff, &term.ket, &term.bra, term.kernel));
        self.terms = merge_terms(terms);
        Ok(())
    }

    pub fn add(&self, other: &DensityOp) -> Result<Self> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch("density operators live on different grids".into()));
        }
        let terms = self.terms.iter().chain(&other.terms).cloned().collect();
        Ok(DensityOp { grid: self.grid.clone(), terms: merge_terms(terms) })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| MonomialTerm { coeff: t.coeff * c, ..t.clone() }).collect();
        DensityOp { grid: self.grid.clone(), terms: merge_terms(terms) }
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> Vec<DensityTerm> {
        self.terms
            .iter()
            .map(|t| {
                let (ket, bra) = split(t);
                DensityTerm { coeff: t.coeff, ket, bra, kernel: t.amplitude.clone() }
            })
            .collect()
    }

    pub fn modes(&self) -> Vec<ModeId> {
        let mut m: Vec<ModeId> = self.terms.iter().flat_map(|t| t.slots.iter().map(|x| x.untagged())).collect();
        m.sort();
        m.dedup();
        m
    }

    /// `ρ†`: ket and bra sides swapped, kernel conjugated.
    pub fn adjoint(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let (ket, bra) = split(t);
                let (nk, nb) = (ket.len(), bra.len());
                let factors = t
                    .amplitude
                    .factors()
                    .iter()
                    .map(|f| {
                        let args = f.args().iter().map(|&a| if a < nk { a + nb } else { a - nk }).collect();
                        Factor::new(args, f.data().iter().map(|z| z.conj()).collect())
                    })
                    .collect();
                let kernel = SpectralAmplitude::from_parts(self.grid.clone(), nk + nb, factors);
                dyad(t.coeff.conj(), &bra, &ket, kernel)
            })
            .collect();
        DensityOp { grid: self.grid.clone(), terms: merge_terms(terms) }
    }

    /// `Tr(ρ M)`.
    pub fn trace(&self, obs: &Observable) -> Result<Complex64> {
        self.trace_with(obs, &ModeOverlap::orthogonal())
    }

    pub fn trace_with(&self, obs: &Observable, overlaps: &ModeOverlap) -> Result<Complex64> {
        let mut acc = zero();
        for t in &self.terms {
            let (ket, bra) = split(t);
            if ket.len() != bra.len() {
                continue;
            }
            let contract = |kernel: &SpectralAmplitude| -> Result<Complex64> {
                let tensors: Vec<LTensor> = kernel.factors().iter().map(|f| f.labeled(0)).collect();
                contract_full(&ket, &bra, tensors, overlaps, &self.grid)
            };
            let count = |scope: &[ModeId]| -> Option<usize> {
                let nk = ket.iter().filter(|m| scope.contains(m)).count();
                let nb = bra.iter().filter(|m| scope.contains(m)).count();
                (nk == nb).then_some(nk)
            };
            let scale = match obs {
                Observable::Identity => Some(1.0),
                Observable::Projector { scope, n } => count(scope).map(|k| if k == *n { 1.0 } else { 0.0 }),
                Observable::Number { scope } => count(scope).map(|k| k as f64),
                Observable::Outcome { detectors, outcome } => {
                    let mut s = Some(1.0);
                    for (list, click) in [(&outcome.no_detect, false), (&outcome.detect, true)] {
                        for &d in list {
                            let det = detectors.get(d).ok_or_else(|| Error::OutOfRange(format!("detector index {d}")))?;
                            let miss = count(&det.scope).map(|k| det.miss_given_n(k));
                            s = s.zip(miss).map(|(a, m)| a * if click { 1.0 - m } else { m });
                        }
                    }
                    s
                }
                Observable::OneBody(q) => {
                    let (len, kernel) = match q.kernel() {
                        AxisKernel::Diagonal(d) => (d.len(), q.kernel()),
                        AxisKernel::Full(k) => ((k.len() as f64).sqrt() as usize, q.kernel()),
                    };
                    if len != self.grid.bins() {
                        return Err(Error::GridMismatch(format!("operator kernel over {len} bins")));
                    }
                    for (j, m) in ket.iter().enumerate() {
                        if q.scope().is_none_or(|s| s.contains(m)) {
                            acc += t.coeff * contract(&t.amplitude.apply_axis(j, kernel))?;
                        }
                    }
                    None
                }
            };
            if let Some(s) = scale {
                if s != 0.0 {
                    acc += t.coeff * s * contract(&t.amplitude)?;
                }
            }
        }
        Ok(acc)
    }

    /// Real outcome probability `Tr(ρ E)` for a detector outcome.
    pub fn outcome_probability(&self, detectors: &[ApdModel], outcome: &OutcomeSpec) -> Result<f64> {
        let p = self.trace(&Observable::Outcome { detectors: detectors.to_vec(), outcome: outcome.clone() })?;
        clamp_probability(p.re)
    }

    /// Traces out every mode not in `keep`. Traced modes must be orthogonal
    /// to kept ones under `overlaps`.
    pub fn partial_trace(&self, keep: &[ModeId], overlaps: &ModeOverlap) -> Result<Self> {
        let traced: Vec<ModeId> = self.modes().into_iter().filter(|m| !keep.contains(m)).collect();
        if let Some((x, y)) = overlaps.separates(keep, &traced) {
            return Err(Error::NonOrthogonalPartition(x.to_string(), y.to_string()));
        }
        let (b, w) = (self.grid.bins(), self.grid.weights());
        let mut out = Vec::new();
        for t in &self.terms {
            let (ket, bra) = split(t);
            let nk = ket.len();
            let tk: Vec<usize> = (0..nk).filter(|&j| !keep.contains(&ket[j])).collect();
            let tb: Vec<usize> = (0..bra.len()).filter(|&i| !keep.contains(&bra[i])).collect();
            let kk: Vec<usize> = (0..nk).filter(|&j| keep.contains(&ket[j])).collect();
            let kb: Vec<usize> = (0..bra.len()).filter(|&i| keep.contains(&bra[i])).collect();
            if tk.is_empty() && tb.is_empty() {
                out.push(t.clone());
                continue;
            }
            let ket_modes: Vec<ModeId> = tk.iter().map(|&j| ket[j]).collect();
            let bra_modes: Vec<ModeId> = tb.iter().map(|&i| bra[i]).collect();
            let open: Vec<Label> = kk.iter().map(|&j| j as Label).chain(kb.iter().map(|&i| (nk + i) as Label)).collect();
            let new_ket: Vec<ModeId> = kk.iter().map(|&j| ket[j]).collect();
            let new_bra: Vec<ModeId> = kb.iter().map(|&i| bra[i]).collect();
            for p in pairings(&ket_modes, &bra_modes, overlaps)? {
                // bra argument of traced slot tb[r] is identified with ket argument tk[p.ket_of_bra[r]]
                let mut relabel: Vec<Label> = (0..(nk + bra.len()) as Label).collect();
                for (r, &i) in tb.iter().enumerate() {
                    relabel[nk + i] = tk[p.ket_of_bra[r]] as Label;
                }
                let tensors: Vec<LTensor> = t
                    .amplitude
                    .factors()
                    .iter()
                    .map(|f| LTensor { labels: f.args().iter().map(|&a| relabel[a]).collect(), data: f.data().to_vec() })
                    .collect();
                let parts = tensor::contract_components(tensors, &open, b, w);
                let mut coeff = t.coeff * p.kappa;
                let mut factors = Vec::new();
                for part in parts {
                    if part.labels.is_empty() {
                        coeff *= part.data[0];
                    } else {
                        let args = part.labels.iter().map(|l| open.iter().position(|o| o == l).unwrap()).collect();
                        factors.push(Factor::new(args, part.data));
                    }
                }
                let kernel = SpectralAmplitude::from_parts(self.grid.clone(), open.len(), factors);
                out.push(dyad(coeff, &new_ket, &new_bra, kernel));
            }
        }
        Ok(DensityOp { grid: self.grid.clone(), terms: merge_terms(out) })
    }

    /// Dense matrix in an oracle space.
    pub fn to_dense(&self, space: &DenseFockSpace) -> Result<DenseOperator> {
        let mut m = DenseOperator::zeros(space.dim(), space.dim());
        for t in &self.terms {
            let (ket, bra) = split(t);
            let ke = space.expand_slots(&ket, &self.grid)?;
            let be = space.expand_slots(&bra, &self.grid)?;
            let mut idx = Vec::with_capacity(ket.len() + bra.len());
            for (ki, kbins, ks) in &ke {
                for (bi, bbins, bs) in &be {
                    idx.clear();
                    idx.extend_from_slice(kbins);
                    idx.extend_from_slice(bbins);
                    m[(*ki, *bi)] += t.coeff * t.amplitude.value(&idx) * (ks * bs);
                }
            }
        }
        Ok(m)
    }
}

/// Single photon `a_f†|0⟩` decayed for time `t` into a zero-temperature bath
/// with per-bin amplitude loss rate `γ(ω)`. The one-photon block carries
/// `e^{−(γ(ω)+γ(ω′))t} e^{i(ω−ω′)t}`; the vacuum block restores unit trace
/// with weight `1 − ∫ e^{−2γ(ω)t} |f(ω)|² dω`.
pub fn decayed_single_photon(mode: ModeId, f: &SpectralAmplitude, gamma: &[f64], t: f64) -> Result<DensityOp> {
    let grid = f.grid().clone();
    let samples = f.samples().ok_or(Error::ArityMismatch { expected: 1, found: f.arity() })?;
    if gamma.len() != grid.bins() {
        return Err(Error::GridMismatch(format!("loss rate has {} bins, grid has {}", gamma.len(), grid.bins())));
    }
    if !(t >= 0.0) || gamma.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::OutOfRange("decay needs t ≥ 0 and γ ≥ 0".into()));
    }
    let evolved: Vec<Complex64> = samples
        .iter()
        .zip(gamma)
        .zip(grid.nodes())
        .map(|((x, g), w)| x * Complex64::new(-g * t, w * t).exp())
        .collect();
    let kept: f64 = evolved.iter().zip(grid.weights()).map(|(x, w)| x.norm_sqr() * w).sum();
    let g = SpectralAmplitude::from_samples(grid.clone(), evolved)?;
    let mut rho = DensityOp::vacuum(grid).scaled(Complex64::new(1.0 - kept, 0.0));
    rho.push(DensityTerm { coeff: one(), ket: vec![mode], bra: vec![mode], kernel: g.tensor(&g.conj())? })?;
    Ok(rho)
}

/// `Tr(√ρ₁ √ρ₂)` computed densely in `space`.
pub fn fidelity_overlap(rho1: &DensityOp, rho2: &DensityOp, space: &DenseFockSpace) -> Result<f64> {
    Ok(oracle::fidelity_overlap(&rho1.to_dense(space)?, &rho2.to_dense(space)?))
}

// --- wire format ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DyadWire {
    #[serde(with = "crate::complex_serde::scalar")]
    coeff: Complex64,
    ket: Vec<ModeId>,
    bra: Vec<ModeId>,
    kernel: SpectralAmplitude,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityWire {
    grid: FrequencyGrid,
    terms: Vec<DyadWire>,
}

impl Serialize for DensityOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityWire {
            grid: (*self.grid).clone(),
            terms: self.terms().into_iter().map(|t| DyadWire { coeff: t.coeff, ket: t.ket, bra: t.bra, kernel: t.kernel }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = DensityWire::deserialize(d)?;
        let grid = Arc::new(w.grid);
        let mut rho = DensityOp::zero(grid.clone());
        for t in w.terms {
            if **t.kernel.grid() != *grid {
                return Err(D::Error::custom("dyad kernel grid differs from operator grid"));
            }
            let kernel = SpectralAmplitude::from_parts(grid.clone(), t.kernel.arity(), t.kernel.into_factors());
            rho.push(DensityTerm { coeff: t.coeff, ket: t.ket, bra: t.bra, kernel }).map_err(D::Error::custom)?;
        }
        Ok(rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::OutcomeSpec;
    use crate::sources::{bi_photon, single_photon, BiPhotonSpec};
    use crate::spectral::FrequencyGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(b: usize) -> Arc<FrequencyGrid> {
        Arc::new(FrequencyGrid::new(1.0, 2.0, b).unwrap())
    }

    fn ov() -> ModeOverlap {
        ModeOverlap::orthogonal()
    }

    const A: ModeId = ModeId(0);
    const B: ModeId = ModeId(1);

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn vacuum_and_single_photon_traces() {
        let g = grid(5);
        assert!((DensityOp::vacuum(g.clone()).trace(&Observable::Identity).unwrap() - 1.0).norm() < 1e-15);
        let f = SpectralAmplitude::gaussian(g, 1.5, 0.2).unwrap();
        let rho = DensityOp::pure(&single_photon(A, &f).unwrap()).unwrap();
        assert!((rho.trace(&Observable::Identity).unwrap() - 1.0).norm() < 1e-12);
        let p1 = rho.trace(&Observable::Projector { scope: vec![A], n: 1 }).unwrap();
        assert!((p1 - 1.0).norm() < 1e-12);
        assert!(rho.trace(&Observable::Projector { scope: vec![A], n: 0 }).unwrap().norm() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let g = grid(4);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.3, 0.2).unwrap();
        let h = SpectralAmplitude::gaussian(g.clone(), 1.7, 0.3).unwrap();
        let pa = single_photon(A, &f).unwrap();
        let pb = StateVector::monomial(c(0.8), vec![B], h).unwrap();
        let rho = DensityOp::pure(&pa.tensor(&pb).unwrap()).unwrap();
        let red = rho.partial_trace(&[A], &ov()).unwrap();
        let want = DensityOp::pure(&pa).unwrap().scaled(c(0.64));
        for obs in [Observable::Identity, Observable::Number { scope: vec![A] }] {
            let x = red.trace(&obs).unwrap();
            let y = want.trace(&obs).unwrap();
            assert!((x - y).norm() < 1e-12);
        }
        assert_eq!(red.modes(), vec![A]);
    }

    #[test]
    fn cross_number_blocks_vanish() {
        let g = grid(3);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.5, 0.2).unwrap();
        let one_b = StateVector::monomial(c(1.0), vec![A, B], f.power(2)).unwrap();
        let two_b = StateVector::monomial(c(1.0), vec![A, B, B], f.power(3)).unwrap();
        let rho = DensityOp::outer(c(1.0), &one_b, &two_b).unwrap();
        assert!(rho.partial_trace(&[A], &ov()).unwrap().is_empty());
    }

    #[test]
    fn partial_trace_matches_oracle_on_random_states() {
        let g = grid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rc = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let s = DenseFockSpace::new(&[A, B], &g, 3).unwrap();
        for _ in 0..5 {
            let amp = |n: usize, rc: &mut dyn FnMut() -> Complex64| SpectralAmplitude::dense(g.clone(), n, (0..2usize.pow(n as u32)).map(|_| rc()).collect()).unwrap();
            let terms = vec![
                MonomialTerm::new(rc(), vec![A, B], amp(2, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![B, B], amp(2, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![A, B, B], amp(3, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![A], amp(1, &mut rc)).unwrap(),
            ];
            let psi = StateVector::from_terms(g.clone(), terms).unwrap();
            let rho = DensityOp::pure(&psi).unwrap();
            let dense = rho.to_dense(&s).unwrap();
            let direct = oracle::outer(&s.embed(&psi).unwrap());
            assert!((&dense - &direct).norm() < 1e-10 * direct.norm());
            let red = rho.partial_trace(&[A], &ov()).unwrap();
            let (sub, want) = s.partial_trace(&dense, &[A]).unwrap();
            let got = red.to_dense(&sub).unwrap();
            assert!((&got - &want).norm() < 1e-10 * want.norm());
            let tr = rho.trace(&Observable::Identity).unwrap();
            assert!((red.trace(&Observable::Identity).unwrap() - tr).norm() < 1e-10 * tr.norm());
        }
    }

    #[test]
    fn local_observable_commutes_with_partial_trace() {
        let g = grid(3);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.4, 0.2).unwrap();
        let h = SpectralAmplitude::gaussian(g.clone(), 1.6, 0.3).unwrap();
        let psi = StateVector::from_terms(
            g.clone(),
            vec![
                MonomialTerm::new(c(0.6), vec![A, B], f.tensor(&h).unwrap()).unwrap(),
                MonomialTerm::new(c(0.5), vec![A, A, B], f.power(2).tensor(&f).unwrap()).unwrap(),
                MonomialTerm::new(c(0.3), vec![B], h.clone()).unwrap(),
            ],
        )
        .unwrap();
        let rho = DensityOp::pure(&psi).unwrap();
        let red = rho.partial_trace(&[A], &ov()).unwrap();
        let det = ApdModel::new(0.7, 0.01, vec![A]).unwrap();
        let obs = [
            Observable::Identity,
            Observable::Number { scope: vec![A] },
            Observable::Projector { scope: vec![A], n: 2 },
            Observable::Outcome { detectors: vec![det], outcome: OutcomeSpec { no_detect: vec![], detect: vec![0] } },
            Observable::OneBody(OneBodyOperator::energy(Some(vec![A]), g.nodes())),
        ];
        for o in &obs {
            let x = rho.trace(o).unwrap();
            let y = red.trace(o).unwrap();
            assert!((x - y).norm() < 1e-10 * x.norm().max(1e-300), "{o:?}: {x} vs {y}");
        }
    }

    #[test]
    fn singlet_reduces_to_maximally_mixed() {
        let g = grid(2);
        let u = SpectralAmplitude::from_samples(g.clone(), vec![c(0.8), Complex64::new(0.2, 0.5)]).unwrap().normalize().unwrap();
        let v = SpectralAmplitude::from_samples(g.clone(), vec![Complex64::new(0.3, -0.4), c(0.9)]).unwrap().normalize().unwrap();
        let (a1, a2, b1, b2) = (ModeId(0), ModeId(1), ModeId(2), ModeId(3));
        let psi = bi_photon(&BiPhotonSpec::singlet(u.tensor(&v).unwrap(), [a1, a2], [b1, b2])).unwrap();
        let red = DensityOp::pure(&psi).unwrap().partial_trace(&[a1, a2], &ov()).unwrap();
        let s = DenseFockSpace::new(&[a1, a2], &g, 2).unwrap();
        let e = oracle::hermitian_eigenvalues(&red.to_dense(&s).unwrap());
        let big: Vec<f64> = e.into_iter().filter(|x| x.abs() > 1e-12).collect();
        assert_eq!(big.len(), 2);
        assert!(big.iter().all(|x| (x - 0.5).abs() < 1e-12));
        let full = DenseFockSpace::new(&[a1, a2, b1, b2], &g, 2).unwrap();
        let (_, want) = full.partial_trace(&oracle::outer(&full.embed(&psi).unwrap()), &[a1, a2]).unwrap();
        assert!((red.to_dense(&s).unwrap() - want).norm() < 1e-12);
    }

    #[test]
    fn adjoint_of_pure_state_is_itself() {
        let g = grid(3);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.4, 0.2).unwrap();
        let psi = StateVector::from_terms(
            g.clone(),
            vec![
                MonomialTerm::new(Complex64::new(0.6, 0.2), vec![A], f.clone()).unwrap(),
                MonomialTerm::new(c(0.5), vec![A, B], f.power(2)).unwrap(),
            ],
        )
        .unwrap();
        let rho = DensityOp::pure(&psi).unwrap();
        let diff = rho.add(&rho.adjoint().scaled(c(-1.0))).unwrap();
        assert!(diff.is_empty(), "{} leftover terms", diff.len());
        let n = rho.trace(&Observable::Number { scope: vec![A] }).unwrap();
        assert!(n.im.abs() < 1e-15);
    }

    #[test]
    fn decay_preserves_trace() {
        let g = grid(6);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.5, 0.2).unwrap();
        let gamma: Vec<f64> = g.nodes().iter().map(|w| 0.1 * w).collect();
        for t in [0.0, 0.5, 3.0, 40.0] {
            let rho = decayed_single_photon(A, &f, &gamma, t).unwrap();
            assert!((rho.trace(&Observable::Identity).unwrap() - 1.0).norm() < 1e-12);
        }
        let pure = DensityOp::pure(&single_photon(A, &f).unwrap()).unwrap();
        let at0 = decayed_single_photon(A, &f, &gamma, 0.0).unwrap();
        assert_eq!(at0.len(), 1);
        let obs = Observable::OneBody(OneBodyOperator::energy(None, g.nodes()));
        assert!((at0.trace(&obs).unwrap() - pure.trace(&obs).unwrap()).norm() < 1e-12 * pure.trace(&obs).unwrap().norm());
        assert!(decayed_single_photon(A, &f, &[-0.1; 6], 1.0).is_err());
        assert!(decayed_single_photon(A, &f, &gamma, -1.0).is_err());
    }

    #[test]
    fn constant_decay_scales_detection() {
        let g = grid(6);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.5, 0.2).unwrap();
        let gamma = 0.3;
        let det = ApdModel::new(0.6, 0.0, vec![A]).unwrap();
        let click = OutcomeSpec { no_detect: vec![], detect: vec![0] };
        let p0 = DensityOp::pure(&single_photon(A, &f).unwrap()).unwrap().outcome_probability(&[det.clone()], &click).unwrap();
        for t in [0.0, 0.4, 2.0] {
            let rho = decayed_single_photon(A, &f, &[gamma; 6], t).unwrap();
            let one = rho.trace(&Observable::Projector { scope: vec![A], n: 1 }).unwrap().re;
            assert!((one - (-2.0 * gamma * t).exp()).abs() < 1e-12);
            let p = rho.outcome_probability(&[det.clone()], &click).unwrap();
            assert!((p - p0 * (-2.0 * gamma * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_does_not_decrease_under_partial_trace() {
        let g = grid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = DenseFockSpace::new(&[A, B], &g, 2).unwrap();
        let sub = DenseFockSpace::new(&[A], &g, 2).unwrap();
        let random_state = |rng: &mut ChaCha8Rng| {
            let mut rc = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let amp = |n: usize, rc: &mut dyn FnMut() -> Complex64| SpectralAmplitude::dense(g.clone(), n, (0..2usize.pow(n as u32)).map(|_| rc()).collect()).unwrap();
            let terms = vec![
                MonomialTerm::new(rc(), vec![], SpectralAmplitude::unit(g.clone())).unwrap(),
                MonomialTerm::new(rc(), vec![A], amp(1, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![B], amp(1, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![A, B], amp(2, &mut rc)).unwrap(),
                MonomialTerm::new(rc(), vec![A, A], amp(2, &mut rc).symmetrize(&[vec![0, 1]]).unwrap()).unwrap(),
            ];
            let psi = StateVector::from_terms(g.clone(), terms).unwrap();
            let n = crate::algebra::norm_squared(&psi, &ModeOverlap::orthogonal()).unwrap();
            DensityOp::pure(&psi.scaled(c(1.0 / n.sqrt()))).unwrap()
        };
        for _ in 0..100 {
            let (r1, r2) = (random_state(&mut rng), random_state(&mut rng));
            let before = fidelity_overlap(&r1, &r2, &s).unwrap();
            let after = fidelity_overlap(&r1.partial_trace(&[A], &ov()).unwrap(), &r2.partial_trace(&[A], &ov()).unwrap(), &sub).unwrap();
            assert!(after >= before - 1e-9, "{after} < {before}");
        }
    }

    #[test]
    fn json_round_trip() {
        let g = grid(3);
        let f = SpectralAmplitude::gaussian(g.clone(), 1.5, 0.2).unwrap();
        let rho = decayed_single_photon(A, &f, &[0.2; 3], 1.0).unwrap();
        let text = serde_json::to_string(&rho).unwrap();
        let back: DensityOp = serde_json::from_str(&text).unwrap();
        let obs = Observable::Number { scope: vec![A] };
        assert!((back.trace(&obs).unwrap() - rho.trace(&obs).unwrap()).norm() < 1e-15);
        assert_eq!(back.len(), rho.len());
    }
}
