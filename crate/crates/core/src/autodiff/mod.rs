//! Reverse-mode automatic differentiation with second-order support.

pub mod activation;
pub mod functional;
pub mod tape;

pub use activation::{activation_eval, ActivationKind};
pub use functional::{dense_hessian, gradient, hvp, jacobian, DiffMap, HvpOperator, DENSE_HESSIAN_CAP};
pub use tape::{Tape, Var};
