//! Dense tensors over grid bins with labeled axes, and weighted network
//! contraction. Every axis has extent `bins`; contracting a label sums over
//! bins with the grid's quadrature weight, which is the discrete form of
//! integrating out a δ(ω − ω′) produced by a commutator.

use num_complex::Complex64;

pub(crate) type Label = u32;

#[derive(Clone, Debug)]
pub(crate) struct LTensor {
    pub labels: Vec<Label>,
    pub data: Vec<Complex64>,
}

pub(crate) fn strides(rank: usize, bins: usize) -> Vec<usize> {
    let mut s = vec![1usize; rank];
    for k in (0..rank.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * bins;
    }
    s
}

/// Transposes a row-major tensor so that new axis `k` is old axis `perm[k]`.
pub(crate) fn permute_axes(data: &[Complex64], bins: usize, perm: &[usize]) -> Vec<Complex64> {
    let rank = perm.len();
    if rank <= 1 || perm.iter().enumerate().all(|(k, &p)| k == p) {
        return data.to_vec();
    }
    let old = strides(rank, bins);
    let src: Vec<usize> = perm.iter().map(|&p| old[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..data.len() {
        out.push(data[off]);
        for k in (0..rank).rev() {
            idx[k] += 1;
            off += src[k];
            if idx[k] < bins {
                break;
            }
            off -= src[k] * bins;
            idx[k] = 0;
        }
    }
    out
}

impl LTensor {
    pub fn scalar(z: Complex64) -> Self {
        LTensor { labels: Vec::new(), data: vec![z] }
    }

    pub fn is_scalar(&self) -> bool {
        self.labels.is_empty()
    }

    fn position(&self, l: Label) -> Option<usize> {
        self.labels.iter().position(|&x| x == l)
    }

    fn repeated_label(&self) -> Option<Label> {
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[i + 1..].contains(l) {
                return Some(*l);
            }
        }
        None
    }

    /// Keeps only the diagonal of the two axes carrying `l`.
    fn diagonal(&self, l: Label, bins: usize) -> LTensor {
        let p = self.position(l).unwrap();
        let q = p + 1 + self.labels[p + 1..].iter().position(|&x| x == l).unwrap();
        let old = strides(self.labels.len(), bins);
        let mut labels = self.labels.clone();
        labels.remove(q);
        let rank = labels.len();
        let mut src: Vec<usize> = (0..self.labels.len()).filter(|&k| k != q).map(|k| old[k]).collect();
        src[p] += old[q];
        let n = bins.pow(rank as u32);
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..n {
            data.push(self.data[off]);
            for k in (0..rank).rev() {
                idx[k] += 1;
                off += src[k];
                if idx[k] < bins {
                    break;
                }
                off -= src[k] * bins;
                idx[k] = 0;
            }
        }
        LTensor { labels, data }
    }

    /// Σ_i w_i T[.., i, ..] over the axis labeled `l`.
    fn sum_out(&self, l: Label, bins: usize, weights: &[f64]) -> LTensor {
        let one = LTensor { labels: vec![l], data: weights.iter().map(|&w| Complex64::new(w, 0.0)).collect() };
        // The weight vector is contracted with unit weights.
        contract_pair(self, &one, bins, None)
    }

    pub fn permuted_to(&self, order: &[Label], bins: usize) -> LTensor {
        let perm: Vec<usize> = order.iter().map(|l| self.position(*l).expect("label present")).collect();
        LTensor { labels: order.to_vec(), data: permute_axes(&self.data, bins, &perm) }
    }
}

/// Contracts two tensors over their shared labels. With `weights`, each
/// summed bin is weighted by the quadrature weight.
pub(crate) fn contract_pair(a: &LTensor, b: &LTensor, bins: usize, weights: Option<&[f64]>) -> LTensor {
    let shared: Vec<Label> = a.labels.iter().copied().filter(|l| b.labels.contains(l)).collect();
    let mut out_labels: Vec<Label> = a.labels.iter().copied().filter(|l| !shared.contains(l)).collect();
    out_labels.extend(b.labels.iter().copied().filter(|l| !shared.contains(l)));

    let sa = strides(a.labels.len(), bins);
    let sb = strides(b.labels.len(), bins);
    let stride_in = |t: &LTensor, s: &[usize], l: Label| t.position(l).map(|p| s[p]).unwrap_or(0);

    // Offsets and weights for every assignment of the shared labels.
    let n_shared = bins.pow(shared.len() as u32);
    let mut shared_tab: Vec<(usize, usize, f64)> = Vec::with_capacity(n_shared);
    {
        let st_a: Vec<usize> = shared.iter().map(|&l| stride_in(a, &sa, l)).collect();
        let st_b: Vec<usize> = shared.iter().map(|&l| stride_in(b, &sb, l)).collect();
        let mut idx = vec![0usize; shared.len()];
        for _ in 0..n_shared {
            let (mut oa, mut ob, mut w) = (0usize, 0usize, 1.0f64);
            for (k, &i) in idx.iter().enumerate() {
                oa += i * st_a[k];
                ob += i * st_b[k];
                if let Some(ws) = weights {
                    w *= ws[i];
                }
            }
            shared_tab.push((oa, ob, w));
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < bins {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    let st_a: Vec<usize> = out_labels.iter().map(|&l| stride_in(a, &sa, l)).collect();
    let st_b: Vec<usize> = out_labels.iter().map(|&l| stride_in(b, &sb, l)).collect();
    let n_out = bins.pow(out_labels.len() as u32);
    let mut data = Vec::with_capacity(n_out);
    let mut idx = vec![0usize; out_labels.len()];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..n_out {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(da, db, w) in &shared_tab {
            acc += a.data[oa + da] * b.data[ob + db] * w;
        }
        data.push(acc);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            oa += st_a[k];
            ob += st_b[k];
            if idx[k] < bins {
                break;
            }
            oa -= st_a[k] * bins;
            ob -= st_b[k] * bins;
            idx[k] = 0;
        }
    }
    LTensor { labels: out_labels, data }
}

/// Contracts a tensor network. Every label not listed in `open` must occur
/// exactly twice (possibly within one tensor) and is summed with weights;
/// open labels occur once. Returns the connected remainders; their outer
/// product is the full result. Scalars are folded into the first remainder.
pub(crate) fn contract_components(
    mut tensors: Vec<LTensor>,
    open: &[Label],
    bins: usize,
    weights: &[f64],
) -> Vec<LTensor> {
    let count = |ts: &[LTensor], l: Label| ts.iter().map(|t| t.labels.iter().filter(|&&x| x == l).count()).sum::<usize>();

    for i in 0..tensors.len() {
        while let Some(l) = tensors[i].repeated_label() {
            let d = tensors[i].diagonal(l, bins);
            tensors[i] = d;
            if !open.contains(&l) && count(&tensors, l) == 1 {
                tensors[i] = tensors[i].sum_out(l, bins, weights);
            }
        }
    }
    for i in 0..tensors.len() {
        let lone: Vec<Label> = tensors[i]
            .labels
            .iter()
            .copied()
            .filter(|&l| !open.contains(&l) && count(&tensors, l) == 1)
            .collect();
        for l in lone {
            tensors[i] = tensors[i].sum_out(l, bins, weights);
        }
    }

    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..tensors.len() {
            for j in i + 1..tensors.len() {
                let shared = tensors[i].labels.iter().filter(|l| tensors[j].labels.contains(l)).count();
                if shared == 0 {
                    continue;
                }
                let cost = tensors[i].labels.len() + tensors[j].labels.len() - shared;
                if best.map_or(true, |(_, _, c)| cost < c) {
                    best = Some((i, j, cost));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let b = tensors.swap_remove(j);
        let a = tensors.swap_remove(i);
        tensors.push(contract_pair(&a, &b, bins, Some(weights)));
    }

    let mut scalar = Complex64::new(1.0, 0.0);
    let mut rest = Vec::new();
    for t in tensors {
        if t.is_scalar() {
            scalar *= t.data[0];
        } else {
            rest.push(t);
        }
    }
    match rest.first_mut() {
        Some(first) => first.data.iter_mut().for_each(|z| *z *= scalar),
        None => rest.push(LTensor::scalar(scalar)),
    }
    rest
}

/// Full contraction to a single tensor with axes in `open` order.
pub(crate) fn contract_network(tensors: Vec<LTensor>, open: &[Label], bins: usize, weights: &[f64]) -> LTensor {
    let parts = contract_components(tensors, open, bins, weights);
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = contract_pair(&acc, p, bins, None);
    }
    if acc.labels.is_empty() {
        acc
    } else {
        acc.permuted_to(open, bins)
    }
}
