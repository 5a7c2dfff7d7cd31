//! Frequency grids and spectral amplitudes.
//!
//! A grid discretizes the positive angular-frequency axis into `bins` nodes
//! with quadrature weights. The continuum δ(ω_i − ω_j) becomes δ_ij / w_i, so
//! `∫ dω g*(ω) f(ω)` becomes `Σ_i w_i g_i* f_i`.
//!
//! A [`SpectralAmplitude`] of arity `n` is a complex function of `n`
//! frequencies, stored as a product of dense blocks ("factors") that each
//! cover a subset of the arguments. A fully dense amplitude is one block; a
//! factored amplitude is `n` one-argument blocks; a pair kernel is a single
//! two-argument block.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, LTensor};

/// Maximum entries of a densified amplitude unless a caller says otherwise.
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// Tolerance on `|‖h‖² − 1|` for amplitudes carrying the normalized flag.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Bin centers, uniform weight Δω = (ω_max − ω_min)/B.
    #[default]
    Midpoint,
    /// Nodes on both endpoints, trapezoid weights.
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub bins: usize,
    #[serde(default, skip_serializing_if = "is_midpoint")]
    pub quadrature: Quadrature,
}

fn is_midpoint(q: &Quadrature) -> bool {
    *q == Quadrature::Midpoint
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct FrequencyGrid {
    spec: GridSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, bins: usize) -> Result<Self> {
        Self::with_quadrature(omega_min, omega_max, bins, Quadrature::Midpoint)
    }

    pub fn with_quadrature(omega_min: f64, omega_max: f64, bins: usize, quadrature: Quadrature) -> Result<Self> {
        GridSpec { omega_min, omega_max, bins, quadrature }.try_into()
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn bins(&self) -> usize {
        self.nodes.len()
    }

    pub fn omega_min(&self) -> f64 {
        self.spec.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.spec.omega_max
    }

    /// Angular frequency of each bin.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_shared(self) -> Arc<FrequencyGrid> {
        Arc::new(self)
    }
}

impl TryFrom<GridSpec> for FrequencyGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        let GridSpec { omega_min, omega_max, bins, quadrature } = spec;
        if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "grid requires 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        if bins == 0 {
            return Err(Error::OutOfRange("grid requires at least one bin".into()));
        }
        let span = omega_max - omega_min;
        let (nodes, weights) = match quadrature {
            Quadrature::Midpoint => {
                let dw = span / bins as f64;
                ((0..bins).map(|i| omega_min + (i as f64 + 0.5) * dw).collect(), vec![dw; bins])
            }
            Quadrature::Trapezoid => {
                if bins < 2 {
                    return Err(Error::OutOfRange("trapezoid quadrature needs at least two bins".into()));
                }
                let h = span / (bins - 1) as f64;
                let nodes = (0..bins).map(|i| omega_min + i as f64 * h).collect();
                let mut w = vec![h; bins];
                w[0] = h / 2.0;
                w[bins - 1] = h / 2.0;
                (nodes, w)
            }
        };
        Ok(FrequencyGrid { spec, nodes, weights })
    }
}

impl From<FrequencyGrid> for GridSpec {
    fn from(g: FrequencyGrid) -> Self {
        g.spec
    }
}

pub(crate) fn same_grid(a: &Arc<FrequencyGrid>, b: &Arc<FrequencyGrid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// A dense block of an amplitude over the arguments `args` (row-major, first
/// listed argument slowest).
#[derive(Clone, Debug)]
pub struct Factor {
    pub(crate) args: Vec<usize>,
    pub(crate) data: Arc<[Complex64]>,
}

impl Factor {
    pub(crate) fn new(args: Vec<usize>, data: Vec<Complex64>) -> Self {
        Factor { args, data: data.into() }
    }

    pub fn args(&self) -> &[usize] {
        &self.args
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.args.len().hash(&mut h);
        for z in self.data.iter() {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub(crate) fn same_content(&self, other: &Factor) -> bool {
        Arc::ptr_eq(&self.data, &other.data) || self.data[..] == other.data[..]
    }

    pub(crate) fn labeled(&self, offset: u32) -> LTensor {
        LTensor { labels: self.args.iter().map(|&a| a as u32 + offset).collect(), data: self.data.to_vec() }
    }

    pub(crate) fn conj_labeled(&self, offset: u32) -> LTensor {
        LTensor {
            labels: self.args.iter().map(|&a| a as u32 + offset).collect(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// Per-frequency linear operator acting on one argument of an amplitude:
/// `h′(ω) = ∫ dω′ K(ω, ω′) h(ω′)`.
#[derive(Clone, Debug)]
pub enum AxisKernel {
    /// `K(ω, ω′) = d(ω) δ(ω − ω′)`.
    Diagonal(Vec<Complex64>),
    /// Continuum kernel values `K(ω_i, ω_j)` in row-major order.
    Full(Vec<Complex64>),
}

#[derive(Clone, Debug)]
pub struct SpectralAmplitude {
    grid: Arc<FrequencyGrid>,
    arity: usize,
    factors: Vec<Factor>,
    normalized: bool,
}

impl PartialEq for SpectralAmplitude {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid)
            && self.arity == other.arity
            && self.factors.len() == other.factors.len()
            && self
                .factors
                .iter()
                .zip(&other.factors)
                .all(|(a, b)| a.args == b.args && a.same_content(b))
    }
}

impl SpectralAmplitude {
    /// Arity-1 amplitude from samples `f(ω_i)`.
    pub fn from_samples(grid: Arc<FrequencyGrid>, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.bins() {
            return Err(Error::GridMismatch(format!("{} samples for {} bins", samples.len(), grid.bins())));
        }
        Ok(SpectralAmplitude { grid, arity: 1, factors: vec![Factor::new(vec![0], samples)], normalized: false })
    }

    pub fn from_fn(grid: Arc<FrequencyGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = grid.nodes().iter().map(|&w| f(w)).collect();
        Self::from_samples(grid, samples).expect("sample count matches grid")
    }

    /// Normalized Gaussian amplitude with `|f|²` of standard deviation `sigma`.
    pub fn gaussian(grid: Arc<FrequencyGrid>, center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::OutOfRange(format!("gaussian width must be positive, got {sigma}")));
        }
        Self::from_fn(grid, |w| Complex64::new((-(w - center).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0)).normalize()
    }

    /// Amplitude supported on a single bin, `1/√w_i` there.
    pub fn single_bin(grid: Arc<FrequencyGrid>, bin: usize) -> Result<Self> {
        if bin >= grid.bins() {
            return Err(Error::OutOfRange(format!("bin {bin} outside grid of {}", grid.bins())));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); grid.bins()];
        v[bin] = Complex64::new(1.0 / grid.weights()[bin].sqrt(), 0.0);
        let mut a = Self::from_samples(grid, v)?;
        a.normalized = true;
        Ok(a)
    }

    /// Two-argument kernel `g(ω_i, ω̃_j)` given row-major.
    pub fn pair_kernel(grid: Arc<FrequencyGrid>, data: Vec<Complex64>) -> Result<Self> {
        let b = grid.bins();
        if data.len() != b * b {
            return Err(Error::GridMismatch(format!("pair kernel of {} entries for {b} bins", data.len())));
        }
        Ok(SpectralAmplitude { grid, arity: 2, factors: vec![Factor::new(vec![0, 1], data)], normalized: false })
    }

    pub fn dense(grid: Arc<FrequencyGrid>, arity: usize, data: Vec<Complex64>) -> Result<Self> {
        Self::dense_with_cap(grid, arity, data, DEFAULT_DENSE_CAP)
    }

    pub fn dense_with_cap(grid: Arc<FrequencyGrid>, arity: usize, data: Vec<Complex64>, cap: usize) -> Result<Self> {
        let entries = (grid.bins() as u128).pow(arity as u32);
        if entries > cap as u128 {
            return Err(Error::DenseCapExceeded { entries, cap });
        }
        if data.len() as u128 != entries {
            return Err(Error::GridMismatch(format!("dense payload of {} entries, expected {entries}", data.len())));
        }
        if arity == 0 {
            // a zero-argument amplitude is a bare scalar, which belongs in the term coefficient
            if data[0] != Complex64::new(1.0, 0.0) {
                return Err(Error::Invalid("zero-argument amplitude must be 1; scale the coefficient instead".into()));
            }
            return Ok(Self::unit(grid));
        }
        Ok(SpectralAmplitude { grid, arity, factors: vec![Factor::new((0..arity).collect(), data)], normalized: false })
    }

    /// Product `f_1(ω_1) ⋯ f_n(ω_n)` of arity-1 amplitudes.
    pub fn factored(parts: &[SpectralAmplitude]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Ok(Self::unit(Arc::new(FrequencyGrid::new(1.0, 2.0, 1)?)));
        };
        let mut acc = first.clone();
        for p in &parts[1..] {
            acc = acc.tensor(p)?;
        }
        Ok(acc)
    }

    /// The arity-0 amplitude with value 1 (the vacuum's amplitude).
    pub fn unit(grid: Arc<FrequencyGrid>) -> Self {
        SpectralAmplitude { grid, arity: 0, factors: Vec::new(), normalized: true }
    }

    /// Tensor product; arguments of `other` follow those of `self`.
    pub fn tensor(&self, other: &SpectralAmplitude) -> Result<Self> {
        self.check_grid(other)?;
        let shift = self.arity;
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().map(|f| Factor {
            args: f.args.iter().map(|a| a + shift).collect(),
            data: f.data.clone(),
        }));
        Ok(SpectralAmplitude {
            grid: self.grid.clone(),
            arity: self.arity + other.arity,
            factors,
            normalized: self.normalized && other.normalized,
        })
    }

    /// `n`-fold tensor power.
    pub fn power(&self, n: usize) -> Self {
        let mut acc = Self::unit(self.grid.clone());
        for _ in 0..n {
            acc = acc.tensor(self).expect("same grid");
        }
        acc
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn from_parts(grid: Arc<FrequencyGrid>, arity: usize, factors: Vec<Factor>) -> Self {
        SpectralAmplitude { grid, arity, factors, normalized: false }
    }

    pub(crate) fn into_factors(self) -> Vec<Factor> {
        self.factors
    }

    pub(crate) fn check_grid(&self, other: &SpectralAmplitude) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("amplitudes live on different grids".into()))
        }
    }

    /// True when every block has a single argument.
    pub fn is_fully_factored(&self) -> bool {
        self.factors.iter().all(|f| f.args.len() == 1)
    }

    /// Samples of an arity-1 amplitude.
    pub fn samples(&self) -> Option<&[Complex64]> {
        (self.arity == 1).then(|| self.factors[0].data())
    }

    /// Value at a grid index tuple.
    pub fn value(&self, idx: &[usize]) -> Complex64 {
        let b = self.grid.bins();
        self.factors.iter().fold(Complex64::new(1.0, 0.0), |acc, f| {
            let off = f.args.iter().fold(0usize, |o, &a| o * b + idx[a]);
            acc * f.data[off]
        })
    }

    /// Row-major dense samples over all arguments.
    pub fn to_dense(&self, cap: usize) -> Result<Vec<Complex64>> {
        let entries = (self.grid.bins() as u128).pow(self.arity as u32);
        if entries > cap as u128 {
            return Err(Error::DenseCapExceeded { entries, cap });
        }
        if self.factors.len() == 1 && self.factors[0].args.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.factors[0].data.to_vec());
        }
        let ts: Vec<LTensor> = self.factors.iter().map(|f| f.labeled(0)).collect();
        let open: Vec<u32> = (0..self.arity as u32).collect();
        let t = tensor::contract_network(ts, &open, self.grid.bins(), self.grid.weights());
        Ok(t.data)
    }

    pub fn densify(&self, cap: usize) -> Result<Self> {
        let data = self.to_dense(cap)?;
        let mut d = Self::dense_with_cap(self.grid.clone(), self.arity, data, cap)?;
        d.normalized = self.normalized;
        Ok(d)
    }

    pub fn conj(&self) -> Self {
        let factors = self
            .factors
            .iter()
            .map(|f| Factor::new(f.args.clone(), f.data.iter().map(|z| z.conj()).collect()))
            .collect();
        SpectralAmplitude { factors, ..self.clone() }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.normalized = self.normalized && (c.norm() - 1.0).abs() < 1e-15;
        if let Some(f) = out.factors.first_mut() {
            *f = Factor::new(f.args.clone(), f.data.iter().map(|z| z * c).collect());
        }
        out
    }

    /// Discretized `(g, f) = ∫ g* f` over all arguments.
    pub fn inner(g: &SpectralAmplitude, f: &SpectralAmplitude) -> Result<Complex64> {
        g.check_grid(f)?;
        if g.arity != f.arity {
            return Err(Error::ArityMismatch { expected: g.arity, found: f.arity });
        }
        let w = g.grid.weights();
        if g.is_fully_factored() && f.is_fully_factored() {
            let mut acc = Complex64::new(1.0, 0.0);
            for a in 0..g.arity {
                let gf = g.factors.iter().find(|x| x.args[0] == a).unwrap();
                let ff = f.factors.iter().find(|x| x.args[0] == a).unwrap();
                acc *= gf.data.iter().zip(ff.data.iter()).zip(w).map(|((x, y), &wi)| x.conj() * y * wi).sum::<Complex64>();
            }
            return Ok(acc);
        }
        let mut ts: Vec<LTensor> = g.factors.iter().map(|x| x.conj_labeled(0)).collect();
        ts.extend(f.factors.iter().map(|x| x.labeled(0)));
        Ok(tensor::contract_network(ts, &[], g.grid.bins(), w).data[0])
    }

    pub fn norm_squared(&self) -> f64 {
        Self::inner(self, self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    fn is_delta_kernel(&self) -> bool {
        let b = self.grid.bins();
        self.arity == 2
            && b > 1
            && self.factors.len() == 1
            && (0..b).all(|i| (0..b).all(|j| i == j || self.factors[0].data[i * b + j] == Complex64::new(0.0, 0.0)))
    }

    /// Rescales to unit norm and sets the normalized flag.
    pub fn normalize(&self) -> Result<Self> {
        if self.is_delta_kernel() {
            return Err(Error::DeltaKernel);
        }
        let n = self.norm_squared();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NotNormalized { norm_sq: n, tol: NORM_TOL });
        }
        let mut out = self.scale(Complex64::new(1.0 / n.sqrt(), 0.0));
        out.normalized = true;
        Ok(out)
    }

    /// Sets the normalized flag after checking the norm.
    pub fn require_normalized(&self) -> Result<Self> {
        if self.is_delta_kernel() {
            return Err(Error::DeltaKernel);
        }
        let n = self.norm_squared();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq: n, tol: NORM_TOL });
        }
        let mut out = self.clone();
        out.normalized = true;
        Ok(out)
    }

    /// Multiplies the values along argument `arg` by `c(ω)`.
    pub fn scale_axis(&self, arg: usize, c: &[Complex64]) -> Self {
        self.apply_axis(arg, &AxisKernel::Diagonal(c.to_vec()))
    }

    /// Applies `K` to argument `arg`.
    pub fn apply_axis(&self, arg: usize, kernel: &AxisKernel) -> Self {
        let b = self.grid.bins();
        let fi = self.factors.iter().position(|f| f.args.contains(&arg)).expect("argument in range");
        let f = &self.factors[fi];
        let pos = f.args.iter().position(|&a| a == arg).unwrap();
        let rank = f.args.len();
        let st = tensor::strides(rank, b)[pos];
        let data: Vec<Complex64> = match kernel {
            AxisKernel::Diagonal(d) => f.data.iter().enumerate().map(|(k, z)| z * d[(k / st) % b]).collect(),
            AxisKernel::Full(kmat) => {
                let w = self.grid.weights();
                let mut out = vec![Complex64::new(0.0, 0.0); f.data.len()];
                for (k, o) in out.iter_mut().enumerate() {
                    let i = (k / st) % b;
                    let base = k - i * st;
                    for j in 0..b {
                        *o += kmat[i * b + j] * w[j] * f.data[base + j * st];
                    }
                }
                out
            }
        };
        let mut out = self.clone();
        out.normalized = false;
        out.factors[fi] = Factor::new(f.args.clone(), data);
        out
    }

    /// Averages over all permutations within each argument group.
    pub fn symmetrize(&self, groups: &[Vec<usize>]) -> Result<Self> {
        self.symmetrize_with_cap(groups, DEFAULT_DENSE_CAP)
    }

    pub fn symmetrize_with_cap(&self, groups: &[Vec<usize>], cap: usize) -> Result<Self> {
        let mut seen = vec![false; self.arity];
        for g in groups {
            for &a in g {
                if a >= self.arity || std::mem::replace(&mut seen[a], true) {
                    return Err(Error::InvalidGroups(format!("argument {a} repeated or out of range")));
                }
            }
        }
        if groups.iter().all(|g| g.len() < 2) {
            return Ok(self.clone());
        }
        let vectors: Vec<Vec<Vec<usize>>> = groups.iter().map(|g| g.iter().map(|&a| vec![a]).collect()).collect();
        self.average_permutations(&vectors, cap)
    }

    /// Averages over permutations of whole argument tuples, e.g. swapping
    /// `(ω_j, ω̃_j)` with `(ω_k, ω̃_k)`. All tuples must have equal length.
    pub fn symmetrize_vectors(&self, vectors: &[Vec<usize>]) -> Result<Self> {
        let len = vectors.first().map_or(0, |v| v.len());
        if vectors.iter().any(|v| v.len() != len) {
            return Err(Error::InvalidGroups("argument tuples of unequal length".into()));
        }
        let mut seen = vec![false; self.arity];
        for &a in vectors.iter().flatten() {
            if a >= self.arity || std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidGroups(format!("argument {a} repeated or out of range")));
            }
        }
        self.average_permutations(&[vectors.to_vec()], DEFAULT_DENSE_CAP)
    }

    fn average_permutations(&self, groups: &[Vec<Vec<usize>>], cap: usize) -> Result<Self> {
        let b = self.grid.bins();
        let mut data = self.to_dense(cap)?;
        for group in groups {
            let k = group.len();
            if k < 2 {
                continue;
            }
            let perms = permutations(k);
            let mut acc = vec![Complex64::new(0.0, 0.0); data.len()];
            for p in &perms {
                let mut axis_perm: Vec<usize> = (0..self.arity).collect();
                for (slot, &src) in p.iter().enumerate() {
                    for (t, &a) in group[slot].iter().enumerate() {
                        axis_perm[a] = group[src][t];
                    }
                }
                let moved = tensor::permute_axes(&data, b, &axis_perm);
                acc.iter_mut().zip(&moved).for_each(|(x, y)| *x += y);
            }
            let inv = 1.0 / perms.len() as f64;
            data = acc.into_iter().map(|z| z * inv).collect();
        }
        Self::dense_with_cap(self.grid.clone(), self.arity, data, cap)
    }

    /// Mean angular frequency `∫ ω_1 |S h|²` of a normalized amplitude, with
    /// `S` the full symmetrizer.
    pub fn mean_frequency(&self) -> Result<f64> {
        let sym = if self.arity > 1 && !self.is_fully_symmetric_product() {
            self.symmetrize(&[(0..self.arity).collect()])?
        } else {
            self.clone()
        };
        let n = sym.norm_squared();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq: n, tol: NORM_TOL });
        }
        let omega: Vec<Complex64> = self.grid.nodes().iter().map(|&w| Complex64::new(w, 0.0)).collect();
        Ok(Self::inner(&sym, &sym.scale_axis(0, &omega))?.re)
    }

    /// Product of identical one-argument blocks, already symmetric.
    fn is_fully_symmetric_product(&self) -> bool {
        self.is_fully_factored() && self.factors.windows(2).all(|w| w[0].same_content(&w[1]))
    }
}

/// All permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

// --- wire format ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplitudeWire {
    grid: GridSpec,
    arity: usize,
    #[serde(default)]
    normalized: bool,
    payload: PayloadWire,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PayloadWire {
    Dense {
        #[serde(with = "crate::complex_serde::vec")]
        data: Vec<Complex64>,
    },
    Factored {
        factors: Vec<SamplesWire>,
    },
    PairKernel {
        #[serde(with = "crate::complex_serde::vec")]
        data: Vec<Complex64>,
    },
    Product {
        blocks: Vec<BlockWire>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct SamplesWire(#[serde(with = "crate::complex_serde::vec")] Vec<Complex64>);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockWire {
    args: Vec<usize>,
    #[serde(with = "crate::complex_serde::vec")]
    data: Vec<Complex64>,
}

impl Serialize for SpectralAmplitude {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let in_order = |f: &Factor| f.args.iter().enumerate().all(|(k, &a)| k == a);
        let payload = if self.factors.len() == 1 && in_order(&self.factors[0]) && self.arity == 2 {
            PayloadWire::PairKernel { data: self.factors[0].data.to_vec() }
        } else if self.factors.len() == 1 && in_order(&self.factors[0]) {
            PayloadWire::Dense { data: self.factors[0].data.to_vec() }
        } else if self.is_fully_factored() && self.factors.iter().enumerate().all(|(k, f)| f.args[0] == k) {
            PayloadWire::Factored { factors: self.factors.iter().map(|f| SamplesWire(f.data.to_vec())).collect() }
        } else {
            PayloadWire::Product {
                blocks: self.factors.iter().map(|f| BlockWire { args: f.args.clone(), data: f.data.to_vec() }).collect(),
            }
        };
        AmplitudeWire { grid: self.grid.spec.clone(), arity: self.arity, normalized: self.normalized, payload }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralAmplitude {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = AmplitudeWire::deserialize(d)?;
        let grid = Arc::new(FrequencyGrid::try_from(w.grid).map_err(D::Error::custom)?);
        let b = grid.bins();
        let block = |args: Vec<usize>, data: Vec<Complex64>| -> std::result::Result<Factor, D::Error> {
            let want = b.pow(args.len() as u32);
            if data.len() != want {
                return Err(D::Error::custom(format!("block over {} args needs {want} entries, got {}", args.len(), data.len())));
            }
            Ok(Factor::new(args, data))
        };
        let factors = match w.payload {
            PayloadWire::Dense { data } => vec![block((0..w.arity).collect(), data)?],
            PayloadWire::PairKernel { data } => {
                if w.arity != 2 {
                    return Err(D::Error::custom("pair_kernel payload requires arity 2"));
                }
                vec![block(vec![0, 1], data)?]
            }
            PayloadWire::Factored { factors } => {
                factors.into_iter().enumerate().map(|(k, s)| block(vec![k], s.0)).collect::<std::result::Result<_, _>>()?
            }
            PayloadWire::Product { blocks } => {
                blocks.into_iter().map(|bw| block(bw.args, bw.data)).collect::<std::result::Result<_, _>>()?
            }
        };
        let mut covered = vec![false; w.arity];
        for &a in factors.iter().flat_map(|f: &Factor| f.args.iter()) {
            if a >= w.arity || std::mem::replace(&mut covered[a], true) {
                return Err(D::Error::custom(format!("argument {a} repeated or out of range")));
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(D::Error::custom("payload does not cover every argument"));
        }
        let amp = SpectralAmplitude { grid, arity: w.arity, factors, normalized: false };
        if w.normalized {
            amp.require_normalized().map_err(D::Error::custom)
        } else {
            Ok(amp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(b: usize) -> Arc<FrequencyGrid> {
        Arc::new(FrequencyGrid::new(1.0, 3.0, b).unwrap())
    }

    fn random_amp(g: &Arc<FrequencyGrid>, rng: &mut ChaCha8Rng) -> SpectralAmplitude {
        let v = (0..g.bins()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        SpectralAmplitude::from_samples(g.clone(), v).unwrap().normalize().unwrap()
    }

    #[test]
    fn grid_rejects_bad_ranges() {
        assert!(FrequencyGrid::new(0.0, 1.0, 4).is_err());
        assert!(FrequencyGrid::new(2.0, 1.0, 4).is_err());
        assert!(FrequencyGrid::new(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn delta_convention_sums_to_one_per_bin() {
        let g = FrequencyGrid::with_quadrature(1.0, 2.0, 5, Quadrature::Trapezoid).unwrap();
        for &w in g.weights() {
            assert!((w * (1.0 / w) - 1.0).abs() < 1e-15);
        }
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inner_of_normalized_is_one() {
        let g = grid(8);
        let f = SpectralAmplitude::gaussian(g, 2.0, 0.3).unwrap();
        assert!((SpectralAmplitude::inner(&f, &f).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn disjoint_supports_are_orthogonal() {
        let g = grid(4);
        let a = SpectralAmplitude::single_bin(g.clone(), 0).unwrap();
        let b = SpectralAmplitude::single_bin(g, 3).unwrap();
        assert_eq!(SpectralAmplitude::inner(&a, &b).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn inner_matches_weighted_sum_oracle() {
        let g = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_amp(&g, &mut rng);
        let h = random_amp(&g, &mut rng);
        let mut oracle = Complex64::new(0.0, 0.0);
        for i in 0..8 {
            oracle += h.samples().unwrap()[i].conj() * f.samples().unwrap()[i] * g.weights()[i];
        }
        let got = SpectralAmplitude::inner(&h, &f).unwrap();
        assert!((got - oracle).norm() < 1e-12);
        let back = SpectralAmplitude::inner(&f, &h).unwrap();
        assert!((got - back.conj()).norm() < 1e-15);
    }

    #[test]
    fn inner_rejects_mismatch() {
        let f = SpectralAmplitude::gaussian(grid(4), 2.0, 0.5).unwrap();
        let h = SpectralAmplitude::gaussian(grid(5), 2.0, 0.5).unwrap();
        assert!(matches!(SpectralAmplitude::inner(&f, &h), Err(Error::GridMismatch(_))));
        assert!(matches!(SpectralAmplitude::inner(&f, &f.power(2)), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn symmetrize_two_term_average() {
        let g = grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_amp(&g, &mut rng);
        let h = random_amp(&g, &mut rng);
        let s = f.tensor(&h).unwrap().symmetrize(&[vec![0, 1]]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let fv = f.samples().unwrap();
                let hv = h.samples().unwrap();
                let want = (fv[i] * hv[j] + hv[i] * fv[j]) * 0.5;
                assert!((s.value(&[i, j]) - want).norm() < 1e-15);
            }
        }
        let again = s.symmetrize(&[vec![0, 1]]).unwrap();
        for k in 0..9 {
            assert!((again.factors()[0].data()[k] - s.factors()[0].data()[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn symmetrize_three_matches_six_permutation_average() {
        let g = grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Complex64> = (0..27).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let h = SpectralAmplitude::dense(g, 3, data.clone()).unwrap();
        let s = h.symmetrize(&[vec![0, 1, 2]]).unwrap();
        let at = |i: usize, j: usize, k: usize| data[i * 9 + j * 3 + k];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let want = (at(i, j, k) + at(i, k, j) + at(j, i, k) + at(j, k, i) + at(k, i, j) + at(k, j, i)) / 6.0;
                    assert!((s.value(&[i, j, k]) - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn vector_symmetrizer_swaps_pairs() {
        let g = grid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let h = SpectralAmplitude::dense(g, 4, data).unwrap();
        let s = h.symmetrize_vectors(&[vec![0, 1], vec![2, 3]]).unwrap();
        for idx in 0..16usize {
            let (a, b, c, d) = (idx >> 3 & 1, idx >> 2 & 1, idx >> 1 & 1, idx & 1);
            let want = (h.value(&[a, b, c, d]) + h.value(&[c, d, a, b])) * 0.5;
            assert!((s.value(&[a, b, c, d]) - want).norm() < 1e-15);
        }
    }

    #[test]
    fn symmetrize_rejects_overlapping_groups() {
        let h = SpectralAmplitude::gaussian(grid(2), 2.0, 1.0).unwrap().power(3);
        assert!(h.symmetrize(&[vec![0, 1], vec![1, 2]]).is_err());
    }

    #[test]
    fn mean_frequency_single_bin() {
        let g = grid(6);
        let f = SpectralAmplitude::single_bin(g.clone(), 4).unwrap();
        assert!((f.mean_frequency().unwrap() - g.nodes()[4]).abs() < 1e-12);
    }

    #[test]
    fn mean_frequency_two_bins_uniform() {
        let g = grid(6);
        let w = g.weights()[0];
        let mut v = vec![Complex64::new(0.0, 0.0); 6];
        v[1] = Complex64::new((0.5 / w).sqrt(), 0.0);
        v[4] = Complex64::new(0.0, (0.5 / w).sqrt());
        let f = SpectralAmplitude::from_samples(g.clone(), v).unwrap();
        let want = 0.5 * (g.nodes()[1] + g.nodes()[4]);
        assert!((f.mean_frequency().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn mean_frequency_pair_matches_direct_sum() {
        let g = grid(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = vec![Complex64::new(0.0, 0.0); 16];
        for i in 0..4 {
            for j in 0..=i {
                let z = Complex64::new(rng.random(), rng.random());
                data[i * 4 + j] = z;
                data[j * 4 + i] = z;
            }
        }
        let h = SpectralAmplitude::dense(g.clone(), 2, data).unwrap().normalize().unwrap();
        let (w, om) = (g.weights(), g.nodes());
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                oracle += w[i] * w[j] * om[i] * h.value(&[i, j]).norm_sqr();
            }
        }
        let got = h.mean_frequency().unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!(got >= g.omega_min() && got <= g.omega_max());
    }

    #[test]
    fn mean_frequency_requires_normalization() {
        let f = SpectralAmplitude::from_fn(grid(4), |_| Complex64::new(3.0, 0.0));
        assert!(matches!(f.mean_frequency(), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn delta_pair_kernel_rejected_when_normalizing() {
        let g = grid(3);
        let mut d = vec![Complex64::new(0.0, 0.0); 9];
        for i in 0..3 {
            d[i * 3 + i] = Complex64::new(1.0, 0.0);
        }
        let k = SpectralAmplitude::pair_kernel(g, d).unwrap();
        assert!(matches!(k.normalize(), Err(Error::DeltaKernel)));
    }

    #[test]
    fn zero_argument_dense_is_unit_or_rejected() {
        let g = grid(3);
        let u = SpectralAmplitude::dense(g.clone(), 0, vec![Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(u, SpectralAmplitude::unit(g.clone()));
        assert!(SpectralAmplitude::dense(g, 0, vec![Complex64::new(0.5, 0.0)]).is_err());
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = grid(10);
        let err = SpectralAmplitude::dense_with_cap(g, 4, vec![Complex64::new(0.0, 0.0); 10_000], 1000);
        assert!(matches!(err, Err(Error::DenseCapExceeded { .. })));
    }

    #[test]
    fn json_round_trip_keeps_payload_kind() {
        let g = grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_amp(&g, &mut rng);
        let kernel = f.tensor(&random_amp(&g, &mut rng)).unwrap().densify(100).unwrap();
        for amp in [f.clone(), f.power(2), kernel.clone(), kernel.tensor(&f).unwrap()] {
            let text = serde_json::to_string(&amp).unwrap();
            let back: SpectralAmplitude = serde_json::from_str(&text).unwrap();
            assert_eq!(back.arity(), amp.arity());
            assert_eq!(back.factors().len(), amp.factors().len());
            assert!((SpectralAmplitude::inner(&back, &amp).unwrap() - amp.norm_squared()).norm() < 1e-12);
        }
        assert!(serde_json::to_string(&kernel).unwrap().contains("pair_kernel"));
        assert!(serde_json::to_string(&f.power(2)).unwrap().contains("factored"));
    }
}
