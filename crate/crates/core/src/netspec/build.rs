use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::schema::*;
use crate::algebra::{Direction, ModeId, ModeOverlap, ModeRegistry, StateVector};
use crate::channels::{self, apply_channel_spectators, CMatrix, UnitaryField};
use crate::detection::ApdModel;
use crate::error::{Error, Result};
use crate::sources::{self, BiPhotonSpec, CoherentSpec, PairModes, DEFAULT_CUTOFF_EPSILON};
use crate::spectral::{FrequencyGrid, SpectralAmplitude};

/// The network of one sweep point.
#[derive(Clone, Debug)]
pub struct Built {
    pub registry: ModeRegistry,
    pub grid: Arc<FrequencyGrid>,
    pub overlaps: ModeOverlap,
    /// Weighted source components. Components differ in photon number, so
    /// number-diagonal statistics are weighted sums over them.
    pub components: Vec<(f64, StateVector)>,
    pub channels: Vec<UnitaryField>,
    pub detectors: Vec<ApdModel>,
    pub detector_names: Vec<String>,
}

impl Built {
    pub(crate) fn new(spec: &ExperimentSpec, with_source: bool) -> Result<Self> {
        let grid = Arc::new(FrequencyGrid::try_from(spec.grid.clone())?);
        let mut registry = ModeRegistry::new();
        for m in &spec.modes {
            registry.declare(
                &m.name,
                m.fiber.as_deref().unwrap_or(&m.name),
                m.polarization.unwrap_or(1),
                m.direction.unwrap_or(Direction::Forward),
            )?;
        }
        let mut overlaps = ModeOverlap::orthogonal();
        for o in &spec.overlaps {
            overlaps.set(registry.id(&o.modes[0])?, registry.id(&o.modes[1])?, o.kappa.0)?;
        }
        let ids: Vec<ModeId> = registry.iter().map(|m| m.id).collect();
        overlaps.check_psd(&ids)?;

        let mut spectra = BTreeMap::new();
        for (name, s) in &spec.spectra {
            spectra.insert(name.as_str(), spectrum(&grid, s)?);
        }
        let spectrum = |name: &str| spectra.get(name).cloned().ok_or_else(|| Error::Invalid(format!("unknown spectrum {name}")));

        let mut chans = Vec::with_capacity(spec.channels.len());
        for (i, c) in spec.channels.iter().enumerate() {
            chans.push(channel(&mut registry, i, c, grid.bins())?);
        }

        for o in &spec.overlaps {
            for name in &o.modes {
                let id = registry.id(name)?;
                if chans.iter().any(|ch| ch.modes_in().contains(&id) || ch.modes_out().contains(&id)) {
                    return Err(Error::Invalid(format!("mode {name} has a nonzero overlap and cannot be a channel port")));
                }
            }
        }

        let mut detectors = Vec::new();
        let mut detector_names: Vec<String> = Vec::new();
        for d in &spec.detectors {
            if detector_names.contains(&d.name) {
                return Err(Error::Invalid(format!("detector {} declared twice", d.name)));
            }
            let scope = d.modes.iter().map(|m| registry.id(m)).collect::<Result<Vec<_>>>()?;
            detectors.push(ApdModel::new(d.eta_det, d.p_dark, scope)?);
            detector_names.push(d.name.clone());
        }
        if detectors.len() > 16 {
            return Err(Error::Invalid(format!("{} detectors; at most 16 are supported", detectors.len())));
        }

        let components = if with_source { source(&registry, &grid, &spec.source, &spectrum)? } else { Vec::new() };
        Ok(Built { registry, grid, overlaps, components, channels: chans, detectors, detector_names })
    }

    /// Source components after every channel.
    pub fn output_states(&self) -> Result<Vec<(f64, StateVector)>> {
        self.components
            .iter()
            .map(|(w, psi)| {
                let mut out = psi.clone();
                for ch in &self.channels {
                    out = apply_channel_spectators(&out, ch)?;
                }
                Ok((*w, out))
            })
            .collect()
    }
}

fn cplx(v: &[Cplx]) -> Vec<Complex64> {
    v.iter().map(|z| z.0).collect()
}

fn spectrum(grid: &Arc<FrequencyGrid>, s: &SpectrumSpec) -> Result<SpectralAmplitude> {
    match s {
        SpectrumSpec::Gaussian { center, sigma } => SpectralAmplitude::gaussian(grid.clone(), *center, *sigma),
        SpectrumSpec::Samples { values, normalize } => {
            let f = SpectralAmplitude::from_samples(grid.clone(), cplx(values))?;
            if *normalize {
                f.normalize()
            } else {
                Ok(f)
            }
        }
        SpectrumSpec::SingleBin { bin } => SpectralAmplitude::single_bin(grid.clone(), *bin),
    }
}

fn kernel(
    grid: &Arc<FrequencyGrid>,
    k: &KernelSpec,
    spectrum: &impl Fn(&str) -> Result<SpectralAmplitude>,
) -> Result<SpectralAmplitude> {
    match k {
        KernelSpec::Product { factors } => spectrum(&factors[0])?.tensor(&spectrum(&factors[1])?),
        KernelSpec::Samples { values, normalize } => {
            let g = SpectralAmplitude::pair_kernel(grid.clone(), cplx(values))?;
            if *normalize {
                g.normalize()
            } else {
                Ok(g)
            }
        }
    }
}

fn poisson_weight(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    (-mean + n as f64 * mean.ln() - ln_fact).exp()
}

fn source(
    registry: &ModeRegistry,
    grid: &Arc<FrequencyGrid>,
    s: &SourceSpec,
    spectrum: &impl Fn(&str) -> Result<SpectralAmplitude>,
) -> Result<Vec<(f64, StateVector)>> {
    let pair = |a: &[String; 2], b: &[String; 2]| -> Result<PairModes> {
        Ok(PairModes { a1: registry.id(&a[0])?, a2: registry.id(&a[1])?, b1: registry.id(&b[0])?, b2: registry.id(&b[1])? })
    };
    Ok(match s {
        SourceSpec::SinglePhoton { mode, spectrum: f } => vec![(1.0, sources::single_photon(registry.id(mode)?, &spectrum(f)?)?)],
        SourceSpec::NPhoton { mode, spectrum: f, n } => {
            let f = spectrum(f)?;
            vec![(1.0, sources::n_photon_single_mode(registry.id(mode)?, &f.power(*n), *n)?)]
        }
        SourceSpec::Coherent { mode, spectrum: f, alpha, cutoff_epsilon } => {
            let spec = CoherentSpec { alpha: alpha.0, f: spectrum(f)?, cutoff_epsilon: cutoff_epsilon.unwrap_or(DEFAULT_CUTOFF_EPSILON) };
            vec![(1.0, sources::coherent(&spec, registry.id(mode)?)?.state)]
        }
        SourceSpec::BiPhoton { a, b, c, kernel: k } => {
            let m = pair(a, b)?;
            let c = [[c[0][0].0, c[0][1].0], [c[1][0].0, c[1][1].0]];
            let g = kernel(grid, k, spectrum)?;
            vec![(1.0, sources::bi_photon(&BiPhotonSpec::common(c, g, [m.a1, m.a2], [m.b1, m.b2]))?)]
        }
        SourceSpec::QkdSinglet { a, b, kernel: k, pairs } => {
            let m = pair(a, b)?;
            let g = kernel(grid, k, spectrum)?;
            match pairs {
                PairCountSpec::Fixed { n } => vec![(1.0, sources::qkd_psi_n(&m, &g, *n)?)],
                PairCountSpec::Poisson { mean, cutoff_epsilon } => {
                    if !(*mean >= 0.0 && mean.is_finite()) {
                        return Err(Error::OutOfRange(format!("pair mean {mean} must be finite and nonnegative")));
                    }
                    let (n_max, _) = sources::poisson_cutoff(*mean, cutoff_epsilon.unwrap_or(DEFAULT_CUTOFF_EPSILON))?;
                    (0..=n_max).map(|n| Ok((poisson_weight(*mean, n), sources::qkd_psi_n(&m, &g, n)?))).collect::<Result<_>>()?
                }
            }
        }
    })
}

fn matrices(m: &MatrixSpec) -> Result<Vec<CMatrix>> {
    let one = |rows: &Vec<Vec<Cplx>>| -> Result<CMatrix> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid(format!("matrix with {n} rows is not square")));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j].0))
    };
    match m {
        MatrixSpec::Flat(rows) => Ok(vec![one(rows)?]),
        MatrixSpec::PerBin(bins) => bins.iter().map(one).collect(),
    }
}

fn channel(registry: &mut ModeRegistry, i: usize, c: &ChannelSpec, bins: usize) -> Result<UnitaryField> {
    let vacuum = |registry: &mut ModeRegistry, given: &Option<String>| -> Result<ModeId> {
        match given {
            Some(name) => registry.id(name),
            None => registry.add(&format!("channel{i}.vacuum")),
        }
    };
    let ids = |registry: &ModeRegistry, names: &[String]| names.iter().map(|n| registry.id(n)).collect::<Result<Vec<_>>>();
    let ch = match c {
        ChannelSpec::BeamSplitter { input, vacuum: v, outputs, eta_trans } => {
            let (x, o) = (registry.id(input)?, ids(registry, outputs)?);
            channels::beam_splitter(x, vacuum(registry, v)?, o[0], o[1], *eta_trans)?
        }
        ChannelSpec::Loss { input, vacuum: v, output, lost, eta_loss } => {
            let (x, y, l) = (registry.id(input)?, registry.id(output)?, registry.id(lost)?);
            let eta = match eta_loss {
                LossSpec::Flat(z) => vec![z.0; bins],
                LossSpec::PerBin(v) => cplx(v),
            };
            if eta.len() != bins {
                return Err(Error::GridMismatch(format!("channel {i}: {} loss values for {bins} bins", eta.len())));
            }
            channels::loss_channel(x, vacuum(registry, v)?, y, l, &eta)?
        }
        ChannelSpec::PolRotation { modes, u, v } => {
            let m = ids(registry, modes)?;
            channels::polarization_rotation(m[0], m[1], u.0, v.0)?
        }
        ChannelSpec::Splice { inputs, outputs, matrix } => {
            let (x, y) = (ids(registry, inputs)?, ids(registry, outputs)?);
            channels::splice([x[0], x[1], x[2], x[3]], [y[0], y[1], y[2], y[3]], matrices(matrix)?)?
        }
        ChannelSpec::Coupler { inputs, outputs, matrix } => {
            let (x, y) = (ids(registry, inputs)?, ids(registry, outputs)?);
            channels::coupler(std::array::from_fn(|k| x[k]), std::array::from_fn(|k| y[k]), matrices(matrix)?)?
        }
        ChannelSpec::CustomUnitary { inputs, outputs, matrix } => {
            UnitaryField::per_bin(ids(registry, inputs)?, ids(registry, outputs)?, matrices(matrix)?)?
        }
    };
    // per-bin channels must match the grid
    ch.substitution(bins)?;
    Ok(ch)
}

fn unknown(name: &str) -> Error {
    Error::Invalid(format!("unknown sweep parameter {name}"))
}

/// Sets one sweepable parameter in `spec`.
pub(crate) fn set_parameter(spec: &mut ExperimentSpec, name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::OutOfRange(format!("{name} = {v} is not finite")));
    }
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        ["source", field] => match (&mut spec.source, *field) {
            (SourceSpec::Coherent { alpha, .. }, "alpha") => {
                let phase = if alpha.0.norm() > 0.0 { alpha.0 / alpha.0.norm() } else { Complex64::new(1.0, 0.0) };
                alpha.0 = phase * v;
            }
            (SourceSpec::Coherent { alpha, .. }, "poisson_mean") => {
                if v < 0.0 {
                    return Err(Error::OutOfRange(format!("{name} = {v} is negative")));
                }
                let phase = if alpha.0.norm() > 0.0 { alpha.0 / alpha.0.norm() } else { Complex64::new(1.0, 0.0) };
                alpha.0 = phase * v.sqrt();
            }
            (SourceSpec::QkdSinglet { pairs: PairCountSpec::Poisson { mean, .. }, .. }, "poisson_mean") => *mean = v,
            (SourceSpec::NPhoton { n, .. }, "n") | (SourceSpec::QkdSinglet { pairs: PairCountSpec::Fixed { n }, .. }, "n") => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::OutOfRange(format!("{name} = {v} is not a photon count")));
                }
                *n = v as usize;
            }
            _ => return Err(unknown(name)),
        },
        ["detector", det, field] => {
            let d = spec.detectors.iter_mut().find(|d| d.name == *det).ok_or_else(|| unknown(name))?;
            match *field {
                "eta_det" => d.eta_det = v,
                "p_dark" => d.p_dark = v,
                _ => return Err(unknown(name)),
            }
        }
        ["channel", idx, field] => {
            let i: usize = idx.parse().map_err(|_| unknown(name))?;
            let c = spec.channels.get_mut(i).ok_or_else(|| unknown(name))?;
            match (c, *field) {
                (ChannelSpec::BeamSplitter { eta_trans, .. }, "eta_trans") => *eta_trans = v,
                (ChannelSpec::Loss { eta_loss, .. }, "eta_loss") => *eta_loss = LossSpec::Flat(Cplx(Complex64::new(v, 0.0))),
                _ => return Err(unknown(name)),
            }
        }
        _ => return Err(unknown(name)),
    }
    Ok(())
}
