//! Extremal eigenvalues of a symmetric operator from products only:
//! plain power iteration, then one shifted run for the opposite end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::tensor::{dot, norm};

/// Iterations per estimate in tracking runs.
pub const DEFAULT_POWER_ITERS: usize = 20;

/// Shifted iterate norm below which the spectrum is treated as a single point.
const DEGENERATE_SHIFT_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Iterations per run (the shifted run uses the same count).
    pub iters: usize,
    /// Larger of the two end residuals ‖Hv − λv‖.
    pub residual_norm: f64,
    pub residual_max: f64,
    pub residual_min: f64,
    pub seed: u64,
    pub zero_operator: bool,
    pub degenerate: bool,
}

struct PowerRun {
    value: f64,
    vector: Vec<f64>,
    residual: f64,
    last_norm: f64,
}

/// Power iteration on `v ↦ Hv − shift·v`. Returns the last Rayleigh pair.
fn power_run(op: &mut dyn LinearOperator, start: &[f64], iters: usize, shift: f64) -> Result<PowerRun> {
    let mut v = start.to_vec();
    let mut run = PowerRun {
        value: 0.0,
        vector: v.clone(),
        residual: 0.0,
        last_norm: 0.0,
    };
    for _ in 0..iters {
        let mut w = op.apply(&v)?;
        if w.len() != v.len() {
            return Err(Error::ShapeMismatch {
                op: "operator output",
                left: vec![v.len()],
                right: vec![w.len()],
            });
        }
        if shift != 0.0 {
            w.iter_mut().zip(&v).for_each(|(a, b)| *a -= shift * b);
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("power iteration".into()));
        }
        let lambda = dot(&v, &w);
        let residual = norm(&w.iter().zip(&v).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
        let n = norm(&w);
        run = PowerRun {
            value: lambda,
            vector: v.clone(),
            residual,
            last_norm: n,
        };
        if n == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / n).collect();
    }
    Ok(run)
}

fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vectors whose Rayleigh quotients gave the two ends.
#[derive(Clone, Debug)]
pub struct ExtremalVectors {
    pub max: Vec<f64>,
    pub min: Vec<f64>,
}

/// `λ_max` and `λ_min` of a symmetric operator.
///
/// The first run finds the eigenvalue of largest magnitude `λa`. The second
/// runs on `H − λa·I`, whose dominant eigenvalue `μ` sits at the other end,
/// giving `λb = λa + μ`. The two are ordered, so a dominant negative
/// eigenvalue is handled as well.
pub fn extremal_eigenvalues(op: &mut dyn LinearOperator, iters: usize, seed: u64) -> Result<SpectralEstimate> {
    extremal_eigenpairs(op, iters, seed).map(|(e, _)| e)
}

/// [`extremal_eigenvalues`] together with the final iterates.
pub fn extremal_eigenpairs(
    op: &mut dyn LinearOperator,
    iters: usize,
    seed: u64,
) -> Result<(SpectralEstimate, ExtremalVectors)> {
    if iters == 0 {
        return Err(Error::invalid("power iteration needs at least one iteration"));
    }
    let dim = op.dim();
    if dim == 0 {
        return Err(Error::invalid("operator dimension is zero"));
    }
    let start = random_unit(dim, seed);
    let first = power_run(op, &start, iters, 0.0)?;
    let mut est = SpectralEstimate {
        lambda_max: 0.0,
        lambda_min: 0.0,
        iters,
        residual_norm: 0.0,
        residual_max: 0.0,
        residual_min: 0.0,
        seed,
        zero_operator: false,
        degenerate: false,
    };
    if first.last_norm == 0.0 && first.value == 0.0 {
        est.zero_operator = true;
        est.degenerate = true;
        let v = first.vector;
        return Ok((est, ExtremalVectors { max: v.clone(), min: v }));
    }
    let la = first.value;
    let shifted = power_run(op, &random_unit(dim, seed ^ 0x9e37_79b9_7f4a_7c15), iters, la)?;
    let (lb, rb, vb) = if shifted.last_norm < DEGENERATE_SHIFT_NORM * la.abs().max(1.0) {
        est.degenerate = true;
        (la, first.residual, first.vector.clone())
    } else {
        (la + shifted.value, shifted.residual, shifted.vector)
    };
    let va = first.vector;
    let vectors = if la >= lb {
        est.lambda_max = la;
        est.lambda_min = lb;
        est.residual_max = first.residual;
        est.residual_min = rb;
        ExtremalVectors { max: va, min: vb }
    } else {
        est.lambda_max = lb;
        est.lambda_min = la;
        est.residual_max = rb;
        est.residual_min = first.residual;
        ExtremalVectors { max: vb, min: va }
    };
    est.residual_norm = est.residual_max.max(est.residual_min);
    Ok((est, vectors))
}
