//! Full counting statistics of photons emitted by a driven optomechanical
//! cavity.

pub mod cascade;
pub mod conditional;
pub mod counting;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod ode;
pub mod operators;
pub mod params;
pub mod presets;
pub mod sparse;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use lindblad::{DensityMatrix, G2Curve, Liouvillian, SteadyState};
pub use operators::{HamiltonianKind, Mode, OperatorMatrix};
pub use params::{HilbertDims, SystemParams};
pub use sparse::{CsrMatrix, C64};
