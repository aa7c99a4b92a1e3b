//! Brute-force reference implementations for checking `headlab-core`.
//!
//! Everything here works on plain slices and shares no code with the
//! production crate: central-difference derivatives, a cyclic Jacobi
//! eigensolver, O(n²) distance statistics and a scalar-loop MLP forward.

use std::fmt;

pub mod fd;
pub mod jacobi;
pub mod mlp;
pub mod stats;

pub use fd::{fd_directional_gradient, fd_gradient, fd_hessian, fd_jacobian};
pub use jacobi::{dense_eig, DenseEig, JacobiError};

/// Combined relative/absolute tolerance with a label for failure messages.
#[derive(Clone, Debug)]
pub struct OracleTolerance {
    pub rel: f64,
    pub abs: f64,
    pub context: String,
}

impl OracleTolerance {
    /// Panics unless both bounds are positive.
    pub fn new(rel: f64, abs: f64, context: impl Into<String>) -> Self {
        assert!(rel > 0.0 && abs > 0.0, "tolerances must be positive");
        OracleTolerance {
            rel,
            abs,
            context: context.into(),
        }
    }

    pub fn accepts(&self, actual: f64, expected: f64) -> bool {
        (actual - expected).abs() <= self.abs + self.rel * expected.abs()
    }

    /// Norm-wise comparison: ‖a − e‖ ≤ abs + rel·‖e‖.
    pub fn accepts_slice(&self, actual: &[f64], expected: &[f64]) -> bool {
        actual.len() == expected.len()
            && l2_dist(actual, expected) <= self.abs + self.rel * l2(expected)
    }

    pub fn check_slice(&self, actual: &[f64], expected: &[f64]) -> Result<(), Mismatch> {
        if self.accepts_slice(actual, expected) {
            Ok(())
        } else {
            Err(Mismatch {
                context: self.context.clone(),
                error: l2_dist(actual, expected),
                scale: l2(expected),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub context: String,
    pub error: f64,
    pub scale: f64,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: error {:.3e} against reference norm {:.3e}",
            self.context, self.error, self.scale
        )
    }
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// ‖a − b‖ / max(‖b‖, tiny)
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    l2_dist(a, b) / l2(b).max(1e-300)
}
