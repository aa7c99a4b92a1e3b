//! Randomized whitening and perturbation-bound cases.

use headlab_core::geometry::{perturbation_bound_check, whitening_head_construct};
use headlab_core::linalg::eigenvalues;
use headlab_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Directions per whitening case.
pub const WHITENING_DIRECTIONS: usize = 100;
/// Relative eigenvalue cutoff used to build the whitening head.
pub const WHITENING_CUTOFF: f64 = 1e-8;

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

/// `A·Aᵀ` with `A` k×r Gaussian: PSD of rank r.
pub fn random_psd(rng: &mut impl Rng, k: usize, r: usize) -> Result<Tensor> {
    let a = gaussian(rng, k, r);
    a.matmul(&a.transpose())
}

#[derive(Clone, Debug, Serialize)]
pub struct WhiteningTrial {
    pub trial: usize,
    pub rank: usize,
    /// λ_1/λ_r of the loss Hessian on its range.
    pub condition: f64,
    /// max |vᵀWᵀHWv − ‖v‖²| over unit v in the target subspace.
    pub deviation: f64,
}

impl WhiteningTrial {
    pub const CSV_HEADER: [&'static str; 4] = ["trial", "rank", "condition", "deviation"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.rank.to_string(),
            format!("{:e}", self.condition),
            format!("{:e}", self.deviation),
        ]
    }
}

/// Random PSD loss Hessians (k×k, rank drawn in 1..=min(k, d)) and random
/// r-dimensional target subspaces of ℝᵈ.
pub fn whitening_trials(k: usize, d: usize, trials: usize, seed: u64) -> Result<Vec<WhiteningTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|trial| {
            let r = rng.random_range(1..=k.min(d));
            let h = random_psd(&mut rng, k, r)?;
            let span = gaussian(&mut rng, r, d);
            let head = whitening_head_construct(&h, &span, WHITENING_CUTOFF)?;
            let g = head.w.transpose().matmul(&h)?.matmul(&head.w)?;
            let mut deviation = 0.0f64;
            for _ in 0..WHITENING_DIRECTIONS {
                let c: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
                let v = head.q.transpose().matvec(&c)?;
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let v: Vec<f64> = v.iter().map(|x| x / n).collect();
                let gv = g.matvec(&v)?;
                let q: f64 = v.iter().zip(&gv).map(|(a, b)| a * b).sum();
                deviation = deviation.max((q - 1.0).abs());
            }
            let condition = head.lambda_r[0] / head.lambda_r[r - 1];
            Ok(WhiteningTrial {
                trial,
                rank: r,
                condition,
                deviation,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationTrial {
    pub trial: usize,
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// max_i |λ_i(J_φᵀHJ_φ) − λ_i(J_*ᵀHJ_*)|
    pub weyl_displacement: f64,
    pub weyl_holds: bool,
}

impl PerturbationTrial {
    pub const CSV_HEADER: [&'static str; 7] =
        ["trial", "epsilon", "lhs", "rhs", "holds", "weyl_displacement", "weyl_holds"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            format!("{:e}", self.epsilon),
            format!("{:e}", self.lhs),
            format!("{:e}", self.rhs),
            self.holds.to_string(),
            format!("{:e}", self.weyl_displacement),
            self.weyl_holds.to_string(),
        ]
    }
}

/// Random `J_*` (k×d), perturbation scale log-uniform in [1e-3, 1] and
/// a random full-rank PSD `H`.
pub fn perturbation_trials(k: usize, d: usize, trials: usize, seed: u64) -> Result<Vec<PerturbationTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|trial| {
            let j_star = gaussian(&mut rng, k, d);
            let scale = 10f64.powf(rng.random_range(-3.0..0.0));
            let j_phi = j_star.add(&gaussian(&mut rng, k, d).scale(scale))?;
            let h = random_psd(&mut rng, k, k)?;
            let check = perturbation_bound_check(&j_star, &j_phi, &h)?;
            let g_phi = j_phi.transpose().matmul(&h)?.matmul(&j_phi)?;
            let g_star = j_star.transpose().matmul(&h)?.matmul(&j_star)?;
            let (a, b) = (eigenvalues(&g_phi)?, eigenvalues(&g_star)?);
            let weyl_displacement = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let slack = 1e-12 * (1.0 + check.lhs);
            Ok(PerturbationTrial {
                trial,
                epsilon: check.epsilon,
                lhs: check.lhs,
                rhs: check.rhs,
                holds: check.holds,
                weyl_displacement,
                weyl_holds: weyl_displacement <= check.lhs + slack,
            })
        })
        .collect()
}
