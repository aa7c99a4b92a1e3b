//! Desk-scale laboratory for the geometry of projection heads in
//! self-supervised learning: exact second-order derivatives, effective
//! Hessian spectra, pullback-metric diagnostics and orbit metrics.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod objective;
pub mod probes;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use autodiff::{ActivationKind, DiffMap, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
