//! Frequency-resolved multi-mode Fock-state calculus.

pub mod algebra;
pub mod channels;
pub mod complex_serde;
pub mod density;
pub mod detection;
pub mod error;
pub mod oracle;
pub mod netspec;
pub mod permanent;
pub mod sources;
pub mod spectral;
pub mod verify;
mod tensor;

pub use algebra::{
    apply_substitution, inner_product, norm_squared, Coefficient, Direction, Mode, ModeId, ModeOverlap, ModeRegistry,
    MonomialTerm, OneBodyOperator, StateVector, Substitution,
};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectral::{AxisKernel, FrequencyGrid, GridSpec, Quadrature, SpectralAmplitude};
