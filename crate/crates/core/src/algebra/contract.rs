//! Vacuum contractions `⟨0| Π bra(ω′) Π ket†(ω) |0⟩` against amplitude
//! networks. Each bijection between bra and ket slots contributes the
//! product of its commutator coefficients times the network with the paired
//! frequency arguments identified.

use num_complex::Complex64;
use rayon::prelude::*;

use super::state::{MonomialTerm, StateVector};
use super::{ModeId, ModeOverlap};
use crate::error::{Error, Result};
use crate::permanent::{permanent, permanent_grouped, MAX_PERMANENT};
use crate::spectral::{same_grid, FrequencyGrid};
use crate::tensor::{self, Label, LTensor};

/// Largest number of slot bijections the general (non-factored) path will
/// enumerate for a single pair of terms.
pub const MAX_BIJECTIONS: u128 = 1 << 20;

pub(crate) struct Pairing {
    pub kappa: Complex64,
    /// `ket_of_bra[i]` is the ket slot paired with bra slot `i`.
    pub ket_of_bra: Vec<usize>,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

/// Groups slots into κ-connected components. Indices `0..nk` are ket slots,
/// `nk..nk+nb` bra slots. Returns `None` when some component has unequal
/// bra and ket counts (the contraction vanishes).
fn components(ket: &[ModeId], bra: &[ModeId], overlaps: &ModeOverlap) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
    let (nk, nb) = (ket.len(), bra.len());
    if nk != nb {
        return None;
    }
    let mut parent: Vec<usize> = (0..nk + nb).collect();
    for j in 0..nk {
        for i in 0..nb {
            if overlaps.kappa(bra[i], ket[j]) != Complex64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, j), find(&mut parent, nk + i));
                parent[a] = b;
            }
        }
    }
    let mut comps: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for x in 0..nk + nb {
        let r = find(&mut parent, x);
        let k = match comps.iter().position(|c| c.0 == r) {
            Some(k) => k,
            None => {
                comps.push((r, Vec::new(), Vec::new()));
                comps.len() - 1
            }
        };
        if x < nk {
            comps[k].1.push(x);
        } else {
            comps[k].2.push(x - nk);
        }
    }
    comps
        .into_iter()
        .map(|(_, k, b)| (k.len() == b.len()).then_some((k, b)))
        .collect()
}

/// All bijections with nonzero commutator weight.
pub(crate) fn pairings(ket: &[ModeId], bra: &[ModeId], overlaps: &ModeOverlap) -> Result<Vec<Pairing>> {
    let Some(comps) = components(ket, bra, overlaps) else {
        return Ok(Vec::new());
    };
    let bound = comps.iter().fold(1u128, |acc, (k, _)| {
        acc.saturating_mul((1..=k.len() as u128).product::<u128>())
    });
    if bound > MAX_BIJECTIONS {
        return Err(Error::TooManyBijections(bound));
    }
    let n = bra.len();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(
        i: usize,
        w: Complex64,
        ket: &[ModeId],
        bra: &[ModeId],
        ov: &ModeOverlap,
        cur: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Pairing>,
    ) {
        if i == bra.len() {
            out.push(Pairing { kappa: w, ket_of_bra: cur.clone() });
            return;
        }
        for j in 0..ket.len() {
            if used[j] {
                continue;
            }
            let k = ov.kappa(bra[i], ket[j]);
            if k == Complex64::new(0.0, 0.0) {
                continue;
            }
            used[j] = true;
            cur.push(j);
            rec(i + 1, w * k, ket, bra, ov, cur, used, out);
            cur.pop();
            used[j] = false;
        }
    }
    rec(0, Complex64::new(1.0, 0.0), ket, bra, overlaps, &mut cur, &mut used, &mut out);
    Ok(out)
}

/// Full vacuum contraction. `tensors` carry label `j` for ket argument `j`
/// and `nk + i` for bra argument `i`; bra-side data is already conjugated.
pub(crate) fn contract_full(
    ket: &[ModeId],
    bra: &[ModeId],
    tensors: Vec<LTensor>,
    overlaps: &ModeOverlap,
    grid: &FrequencyGrid,
) -> Result<Complex64> {
    let Some(comps) = components(ket, bra, overlaps) else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let nk = ket.len();
    if nk == 0 {
        return Ok(tensors.iter().fold(Complex64::new(1.0, 0.0), |acc, t| acc * t.data[0]));
    }
    let (b, w) = (grid.bins(), grid.weights());
    if tensors.iter().all(|t| t.labels.len() == 1) && tensors.len() == 2 * nk {
        let mut by_label: Vec<Option<&[Complex64]>> = vec![None; 2 * nk];
        for t in &tensors {
            by_label[t.labels[0] as usize] = Some(&t.data);
        }
        let by_label: Vec<&[Complex64]> = by_label.into_iter().map(|x| x.expect("one tensor per label")).collect();
        let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
            x.iter().zip(y).zip(w).map(|((p, q), &wi)| p * q * wi).sum()
        };
        let mut total = Complex64::new(1.0, 0.0);
        for (ks, bs) in &comps {
            total *= component_permanent(ks, bs, ket, bra, &by_label, nk, overlaps, dot)?;
            if total == Complex64::new(0.0, 0.0) {
                break;
            }
        }
        return Ok(total);
    }
    let pairs = pairings(ket, bra, overlaps)?;
    let eval = |p: &Pairing| -> Complex64 {
        let relabeled: Vec<LTensor> = tensors
            .iter()
            .map(|t| LTensor {
                labels: t
                    .labels
                    .iter()
                    .map(|&l| if (l as usize) < nk { l } else { p.ket_of_bra[l as usize - nk] as Label })
                    .collect(),
                data: t.data.clone(),
            })
            .collect();
        p.kappa * tensor::contract_network(relabeled, &[], b, w).data[0]
    };
    if pairs.len() > 8 {
        // collect first so the summation order does not depend on scheduling
        Ok(pairs.par_iter().map(eval).collect::<Vec<_>>().into_iter().sum())
    } else {
        Ok(pairs.iter().map(eval).sum())
    }
}

#[allow(clippy::too_many_arguments)]
fn component_permanent(
    ks: &[usize],
    bs: &[usize],
    ket: &[ModeId],
    bra: &[ModeId],
    by_label: &[&[Complex64]],
    nk: usize,
    overlaps: &ModeOverlap,
    dot: impl Fn(&[Complex64], &[Complex64]) -> Complex64,
) -> Result<Complex64> {
    let n = ks.len();
    if n <= MAX_PERMANENT {
        let mut m = Vec::with_capacity(n * n);
        for &i in bs {
            for &j in ks {
                let k = overlaps.kappa(bra[i], ket[j]);
                m.push(if k == Complex64::new(0.0, 0.0) { k } else { k * dot(by_label[nk + i], by_label[j]) });
            }
        }
        return permanent(&m, n);
    }
    // Collapse repeated rows and columns (same mode, same samples).
    let group = |idx: &[usize], modes: &[ModeId], offset: usize| -> (Vec<usize>, Vec<usize>) {
        let mut reps: Vec<usize> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        for &x in idx {
            match reps.iter().position(|&r| modes[r] == modes[x] && by_label[offset + r] == by_label[offset + x]) {
                Some(p) => mult[p] += 1,
                None => {
                    reps.push(x);
                    mult.push(1);
                }
            }
        }
        (reps, mult)
    };
    let (rows, rm) = group(bs, bra, nk);
    let (cols, cm) = group(ks, ket, 0);
    let mut m = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            let k = overlaps.kappa(bra[i], ket[j]);
            m.push(if k == Complex64::new(0.0, 0.0) { k } else { k * dot(by_label[nk + i], by_label[j]) });
        }
    }
    permanent_grouped(&m, &rm, &cm)
}

/// `⟨bra monomial | ket monomial⟩` without the coefficients.
pub fn term_overlap(bra: &MonomialTerm, ket: &MonomialTerm, overlaps: &ModeOverlap) -> Result<Complex64> {
    if bra.slots.len() != ket.slots.len() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if overlaps.is_identity() && bra.slots != ket.slots {
        return Ok(Complex64::new(0.0, 0.0));
    }
    bra.amplitude.check_grid(&ket.amplitude)?;
    let nk = ket.slots.len() as u32;
    let mut tensors: Vec<LTensor> = ket.amplitude.factors().iter().map(|f| f.labeled(0)).collect();
    tensors.extend(bra.amplitude.factors().iter().map(|f| f.conj_labeled(nk)));
    contract_full(&ket.slots, &bra.slots, tensors, overlaps, ket.amplitude.grid())
}

/// `⟨bra|ket⟩`.
pub fn inner_product(bra: &StateVector, ket: &StateVector, overlaps: &ModeOverlap) -> Result<Complex64> {
    if !same_grid(bra.grid(), ket.grid()) {
        return Err(Error::GridMismatch("states live on different grids".into()));
    }
    let pairs: Vec<(&MonomialTerm, &MonomialTerm)> =
        bra.terms().iter().flat_map(|b| ket.terms().iter().map(move |k| (b, k))).collect();
    pairs
        .par_iter()
        .map(|(b, k)| Ok(b.coeff.conj() * k.coeff * term_overlap(b, k, overlaps)?))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().sum())
}

pub fn norm_squared(psi: &StateVector, overlaps: &ModeOverlap) -> Result<f64> {
    Ok(inner_product(psi, psi, overlaps)?.re)
}

/// Row-major `G_ab = ⟨t_a|t_b⟩` over the terms of `psi`, coefficients
/// excluded.
pub fn gram_matrix(psi: &StateVector, overlaps: &ModeOverlap) -> Result<Vec<Complex64>> {
    let terms = psi.terms();
    let n = terms.len();
    let upper: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let vals: Vec<Complex64> = upper
        .par_iter()
        .map(|&(a, b)| term_overlap(&terms[a], &terms[b], overlaps))
        .collect::<Result<_>>()?;
    let mut g = vec![Complex64::new(0.0, 0.0); n * n];
    for (&(a, b), v) in upper.iter().zip(vals) {
        g[a * n + b] = v;
        g[b * n + a] = v.conj();
    }
    Ok(g)
}
