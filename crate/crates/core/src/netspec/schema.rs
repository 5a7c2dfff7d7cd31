//! Wire types of the experiment file (`"schema_version": 1`).

use std::borrow::Cow;
use std::collections::BTreeMap;

use num_complex::Complex64;
use schemars::{json_schema, JsonSchema, Schema, SchemaGenerator};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::Direction;
use crate::spectral::GridSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// A complex number written either as a plain number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx(pub Complex64);

impl Serialize for Cplx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            self.0.re.serialize(s)
        } else {
            [self.0.re, self.0.im].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Cplx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Real(f64),
            Pair([f64; 2]),
        }
        match Repr::deserialize(d) {
            Ok(Repr::Real(re)) => Ok(Cplx(Complex64::new(re, 0.0))),
            Ok(Repr::Pair([re, im])) => Ok(Cplx(Complex64::new(re, im))),
            Err(_) => Err(serde::de::Error::custom("expected a number or an [re, im] pair")),
        }
    }
}

impl JsonSchema for Cplx {
    fn schema_name() -> Cow<'static, str> {
        "Complex".into()
    }

    fn json_schema(_: &mut SchemaGenerator) -> Schema {
        json_schema!({
            "description": "Real number or [re, im] pair.",
            "oneOf": [
                { "type": "number" },
                { "type": "array", "items": { "type": "number" }, "minItems": 2, "maxItems": 2 }
            ]
        })
    }
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::OutcomeTable]
}

fn is_default_outputs(v: &[OutputKind]) -> bool {
    v == [OutputKind::OutcomeTable]
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub grid: GridSpec,
    pub modes: Vec<ModeSpec>,
    /// Commutator coefficients between distinct modes; unlisted pairs are
    /// orthogonal.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overlaps: Vec<OverlapSpec>,
    /// Named single-argument spectral amplitudes.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub spectra: BTreeMap<String, SpectrumSpec>,
    pub source: SourceSpec,
    /// Applied in order; modes a channel does not touch pass through.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSpec>,
    pub detectors: Vec<DetectorSpec>,
    /// Axes of a Cartesian sweep; the first axis varies slowest.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
    #[serde(default = "default_outputs", skip_serializing_if = "is_default_outputs")]
    pub outputs: Vec<OutputKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub name: String,
    /// Defaults to the mode name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<String>,
    /// 1 or 2; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<u8>,
    /// `"+"` or `"-"`; defaults to `"+"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OverlapSpec {
    pub modes: [String; 2],
    pub kappa: Cplx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    /// Normalized Gaussian; `sigma` is the standard deviation of `|f|²`.
    Gaussian { center: f64, sigma: f64 },
    /// Per-bin samples.
    Samples {
        values: Vec<Cplx>,
        #[serde(default = "yes", skip_serializing_if = "is_true")]
        normalize: bool,
    },
    SingleBin { bin: usize },
}

/// Two-argument kernel `g(ω_a, ω_b)` of a photon pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `u(ω_a) v(ω_b)` from two named spectra.
    Product { factors: [String; 2] },
    /// Row-major `B×B` samples.
    Samples {
        values: Vec<Cplx>,
        #[serde(default = "yes", skip_serializing_if = "is_true")]
        normalize: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairCountSpec {
    Fixed { n: usize },
    /// Poisson-weighted mixture of pair numbers, truncated where the
    /// remaining mass drops below `cutoff_epsilon`.
    Poisson {
        mean: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff_epsilon: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    SinglePhoton { mode: String, spectrum: String },
    /// `n` photons in one mode, all with the same spectrum.
    NPhoton { mode: String, spectrum: String, n: usize },
    Coherent {
        mode: String,
        spectrum: String,
        alpha: Cplx,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff_epsilon: Option<f64>,
    },
    /// `Σ_ij c_ij (g: a_i† b_j†)|0⟩`.
    BiPhoton { a: [String; 2], b: [String; 2], c: [[Cplx; 2]; 2], kernel: KernelSpec },
    /// Polarization-singlet pairs `(a₁†b₂† − a₂†b₁†)ⁿ`, normalized per `n`.
    QkdSinglet { a: [String; 2], b: [String; 2], kernel: KernelSpec, pairs: PairCountSpec },
}

/// Per-bin or frequency-flat loss amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum LossSpec {
    Flat(Cplx),
    PerBin(Vec<Cplx>),
}

/// Row-major square matrix, either one for all bins or one per bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Flat(Vec<Vec<Cplx>>),
    PerBin(Vec<Vec<Vec<Cplx>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// `input → √η outputs[0] + √(1−η) outputs[1]`. Without `vacuum` an
    /// unoccupied second input is declared automatically.
    BeamSplitter {
        input: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vacuum: Option<String>,
        outputs: [String; 2],
        eta_trans: f64,
    },
    /// `input → η output + √(1−|η|²) lost`.
    Loss {
        input: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vacuum: Option<String>,
        output: String,
        lost: String,
        eta_loss: LossSpec,
    },
    /// SU(2) rotation `[[u, v], [−v*, u*]]` on a polarization pair.
    PolRotation { modes: [String; 2], u: Cplx, v: Cplx },
    /// Inputs `[b₁−, a₁+, b₂−, a₂+]`, outputs `[a₁−, b₁+, a₂−, b₂+]`.
    Splice { inputs: [String; 4], outputs: [String; 4], matrix: MatrixSpec },
    Coupler { inputs: [String; 8], outputs: [String; 8], matrix: MatrixSpec },
    CustomUnitary { inputs: Vec<String>, outputs: Vec<String>, matrix: MatrixSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub name: String,
    pub modes: Vec<String>,
    pub eta_det: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p_dark: f64,
}

/// One sweep axis. Parameters: `source.alpha`, `source.poisson_mean`
/// (coherent `|α|²` or the Poisson pair mean), `source.n`,
/// `detector.<name>.eta_det`,
/// `detector.<name>.p_dark`, `channel.<index>.eta_trans`,
/// `channel.<index>.eta_loss`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Probability of every click pattern.
    OutcomeTable,
    /// Click probability of each detector.
    Marginals,
    /// Mean photon number in each detector's scope.
    MeanPhotons,
}
