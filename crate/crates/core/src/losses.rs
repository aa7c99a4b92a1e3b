//! Pairwise self-supervised objectives recorded on a tape, plus the
//! intrinsic loss-Hessian spectrum with respect to the head output.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ActivationKind, HvpOperator, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::sym_eig;
use crate::tensor::Tensor;

/// Variance floor inside the VICReg standard deviation.
pub const VICREG_EPS: f64 = 1e-4;

/// Default relative rank cutoff: eigenvalues above `1e-8 · max(1, |λ|max)` count.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Cosine logits with in-batch negatives.
    InfoNce { temperature: f64, symmetric: bool },
    /// −cos(online, stopgrad(target)), averaged over the batch.
    SimSiamCosine,
    /// ‖u − v‖², averaged over the batch.
    PairMse,
    Vicreg { invariance: f64, variance: f64, covariance: f64 },
    BarlowTwins { off_diagonal: f64 },
}

impl LossKind {
    pub fn info_nce(temperature: f64) -> Self {
        LossKind::InfoNce {
            temperature,
            symmetric: true,
        }
    }

    pub fn vicreg_default() -> Self {
        LossKind::Vicreg {
            invariance: 25.0,
            variance: 25.0,
            covariance: 1.0,
        }
    }

    pub fn barlow_default() -> Self {
        LossKind::BarlowTwins { off_diagonal: 5e-3 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::InfoNce { .. } => "infonce",
            LossKind::SimSiamCosine => "simsiam",
            LossKind::PairMse => "pair_mse",
            LossKind::Vicreg { .. } => "vicreg",
            LossKind::BarlowTwins { .. } => "barlow",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LossKind::InfoNce { temperature, .. } => temperature > 0.0 && temperature.is_finite(),
            LossKind::Vicreg {
                invariance,
                variance,
                covariance,
            } => invariance >= 0.0 && variance >= 0.0 && covariance >= 0.0,
            LossKind::BarlowTwins { off_diagonal } => off_diagonal >= 0.0,
            LossKind::SimSiamCosine | LossKind::PairMse => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid loss coefficients: {self:?}")))
        }
    }
}

/// A scalar objective of two embedding batches.
pub trait PairLoss {
    fn build(&self, tape: &mut Tape, u: Var, v: Var) -> Result<Var>;

    /// True when the loss only sees row directions, so rescaling a row is flat.
    fn is_cosine(&self) -> bool {
        false
    }

    fn evaluate(&self, u: &Tensor, v: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(u.as_matrix()), tape.leaf(v.as_matrix()));
        let l = self.build(&mut tape, a, b)?;
        tape.scalar(l)
    }
}

impl PairLoss for LossKind {
    fn build(&self, tape: &mut Tape, u: Var, v: Var) -> Result<Var> {
        self.validate()?;
        let (us, vs) = (tape.value(u).dims2(), tape.value(v).dims2());
        if us != vs {
            return Err(Error::ShapeMismatch {
                op: "pair loss",
                left: vec![us.0, us.1],
                right: vec![vs.0, vs.1],
            });
        }
        match *self {
            LossKind::InfoNce {
                temperature,
                symmetric,
            } => batch_info_nce(tape, u, v, temperature, symmetric),
            LossKind::SimSiamCosine => {
                let t = tape.stop_gradient(v);
                negative_cosine(tape, u, t)
            }
            LossKind::PairMse => {
                let d = tape.sub(u, v)?;
                let sq = tape.square(d);
                let s = tape.sum_all(sq);
                Ok(tape.scale(s, 1.0 / us.0 as f64))
            }
            LossKind::Vicreg {
                invariance,
                variance,
                covariance,
            } => vicreg(tape, u, v, invariance, variance, covariance),
            LossKind::BarlowTwins { off_diagonal } => barlow(tape, u, v, off_diagonal),
        }
    }

    fn is_cosine(&self) -> bool {
        matches!(self, LossKind::InfoNce { .. } | LossKind::SimSiamCosine)
    }
}

/// `c · L`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<L> {
    pub factor: f64,
    pub loss: L,
}

impl<L: PairLoss> PairLoss for Scaled<L> {
    fn build(&self, tape: &mut Tape, u: Var, v: Var) -> Result<Var> {
        let l = self.loss.build(tape, u, v)?;
        Ok(tape.scale(l, self.factor))
    }

    fn is_cosine(&self) -> bool {
        self.loss.is_cosine()
    }
}

fn require_nonzero_rows(tape: &Tape, x: Var, what: &str) -> Result<()> {
    let t = tape.value(x);
    for i in 0..t.rows() {
        if t.row(i).iter().all(|&a| a == 0.0) {
            return Err(Error::Degenerate(format!("{what} row {i} has zero norm")));
        }
    }
    Ok(())
}

fn diagonal(tape: &mut Tape, square: Var) -> Result<Var> {
    let n = tape.value(square).rows();
    let eye = tape.constant(Tensor::identity(n));
    let masked = tape.mul(square, eye)?;
    Ok(tape.sum_cols(masked))
}

fn one_way_info_nce(tape: &mut Tape, a: Var, b: Var, temperature: f64) -> Result<Var> {
    let sim = tape.matmul_nt(a, b)?;
    let logits = tape.scale(sim, 1.0 / temperature);
    let pos = diagonal(tape, logits)?;
    let lse = tape.log_sum_exp_rows(logits)?;
    let per = tape.sub(lse, pos)?;
    Ok(tape.mean_all(per))
}

fn batch_info_nce(tape: &mut Tape, u: Var, v: Var, temperature: f64, symmetric: bool) -> Result<Var> {
    if tape.value(u).rows() < 2 {
        return Err(Error::invalid("InfoNCE needs at least one in-batch negative"));
    }
    require_nonzero_rows(tape, u, "InfoNCE anchor")?;
    require_nonzero_rows(tape, v, "InfoNCE positive")?;
    let un = tape.normalize_rows(u)?;
    let vn = tape.normalize_rows(v)?;
    let forward = one_way_info_nce(tape, un, vn, temperature)?;
    if !symmetric {
        return Ok(forward);
    }
    let backward = one_way_info_nce(tape, vn, un, temperature)?;
    let s = tape.add(forward, backward)?;
    Ok(tape.scale(s, 0.5))
}

fn negative_cosine(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    require_nonzero_rows(tape, a, "online embedding")?;
    require_nonzero_rows(tape, b, "target embedding")?;
    let an = tape.normalize_rows(a)?;
    let bn = tape.normalize_rows(b)?;
    let p = tape.mul(an, bn)?;
    let cos = tape.sum_cols(p);
    let m = tape.mean_all(cos);
    Ok(tape.neg(m))
}

/// Column means broadcast back to the batch and subtracted.
fn centered(tape: &mut Tape, x: Var) -> Result<Var> {
    let n = tape.value(x).rows();
    let s = tape.sum_rows(x);
    let mean = tape.scale(s, 1.0 / n as f64);
    let mb = tape.broadcast_rows(mean, n)?;
    tape.sub(x, mb)
}

fn vicreg_branch(tape: &mut Tape, x: Var, variance: f64, covariance: f64) -> Result<Var> {
    let (n, k) = tape.value(x).dims2();
    let c = centered(tape, x)?;
    let sq = tape.square(c);
    let ss = tape.sum_rows(sq);
    let var = tape.scale(ss, 1.0 / (n - 1) as f64);
    let shifted = tape.offset(var, VICREG_EPS);
    let std = tape.sqrt(shifted);
    let neg = tape.neg(std);
    let gap = tape.offset(neg, 1.0);
    let hinge = tape.activation(gap, ActivationKind::ReLU);
    let var_term = tape.sum_all(hinge);

    let cov_raw = tape.matmul_tn(c, c)?;
    let cov = tape.scale(cov_raw, 1.0 / (n - 1) as f64);
    let cov_sq = tape.square(cov);
    let all = tape.sum_all(cov_sq);
    let d = diagonal(tape, cov)?;
    let d_sq = tape.square(d);
    let on = tape.sum_all(d_sq);
    let off = tape.sub(all, on)?;
    let cov_term = tape.scale(off, 1.0 / k as f64);

    let a = tape.scale(var_term, variance);
    let b = tape.scale(cov_term, covariance);
    tape.add(a, b)
}

fn vicreg(tape: &mut Tape, u: Var, v: Var, invariance: f64, variance: f64, covariance: f64) -> Result<Var> {
    if tape.value(u).rows() < 2 {
        return Err(Error::invalid("VICReg needs a batch of at least 2"));
    }
    let diff = tape.sub(u, v)?;
    let sq = tape.square(diff);
    let mse = tape.mean_all(sq);
    let inv = tape.scale(mse, invariance);
    let bu = vicreg_branch(tape, u, variance, covariance)?;
    let bv = vicreg_branch(tape, v, variance, covariance)?;
    let s = tape.add(inv, bu)?;
    tape.add(s, bv)
}

/// Per-column standardization with the biased variance.
fn standardized(tape: &mut Tape, x: Var, what: &str) -> Result<Var> {
    let n = tape.value(x).rows();
    let c = centered(tape, x)?;
    let sq = tape.square(c);
    let ss = tape.sum_rows(sq);
    let var = tape.scale(ss, 1.0 / n as f64);
    if let Some(j) = tape.value(var).data().iter().position(|&s| s.sqrt() <= 1e-12) {
        return Err(Error::Degenerate(format!("{what} feature {j} has zero variance")));
    }
    let std = tape.sqrt(var);
    let inv = tape.recip(std);
    let ib = tape.broadcast_rows(inv, n)?;
    tape.mul(c, ib)
}

fn barlow(tape: &mut Tape, u: Var, v: Var, off_diagonal: f64) -> Result<Var> {
    let n = tape.value(u).rows();
    if n < 2 {
        return Err(Error::invalid("Barlow Twins needs a batch of at least 2"));
    }
    let us = standardized(tape, u, "first branch")?;
    let vs = standardized(tape, v, "second branch")?;
    let raw = tape.matmul_tn(us, vs)?;
    let cc = tape.scale(raw, 1.0 / n as f64);
    let d = diagonal(tape, cc)?;
    let dm1 = tape.offset(d, -1.0);
    let dsq = tape.square(dm1);
    let on = tape.sum_all(dsq);
    let all_sq = tape.square(cc);
    let all = tape.sum_all(all_sq);
    let d_sq = tape.square(d);
    let diag_sq = tape.sum_all(d_sq);
    let off = tape.sub(all, diag_sq)?;
    let off = tape.scale(off, off_diagonal);
    tape.add(on, off)
}

/// Single-anchor InfoNCE: −log(e^{s⁺/τ} / (e^{s⁺/τ} + Σ e^{s⁻/τ})) with cosine similarities.
pub fn info_nce(anchor: &Tensor, positive: &Tensor, negatives: &Tensor, temperature: f64) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let negs = negatives.as_matrix();
    if negs.numel() == 0 {
        return Err(Error::invalid("InfoNCE needs at least one negative"));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(anchor.as_matrix());
    let p = tape.leaf(positive.as_matrix());
    let n = tape.leaf(negs);
    for (x, what) in [(a, "anchor"), (p, "positive"), (n, "negative")] {
        require_nonzero_rows(&tape, x, what)?;
    }
    let an = tape.normalize_rows(a)?;
    let pn = tape.normalize_rows(p)?;
    let nn = tape.normalize_rows(n)?;
    let sp = tape.matmul_nt(an, pn)?;
    let sn = tape.matmul_nt(an, nn)?;
    let sp = tape.scale(sp, 1.0 / temperature);
    let sn = tape.scale(sn, 1.0 / temperature);
    let spt = tape.transpose(sp);
    let snt = tape.transpose(sn);
    // stack [s⁺; s⁻] as a column, then one row for log-sum-exp
    let all = stack_columns(&mut tape, spt, snt)?;
    let row = tape.transpose(all);
    let lse = tape.log_sum_exp_rows(row)?;
    let l = tape.sub(lse, sp)?;
    tape.scalar(l)
}

fn stack_columns(tape: &mut Tape, top: Var, bottom: Var) -> Result<Var> {
    let (a, b) = (tape.value(top).rows(), tape.value(bottom).rows());
    let n = a + b;
    let mut sel_top = Tensor::zeros(&[n, a]);
    for i in 0..a {
        sel_top.set(i, i, 1.0);
    }
    let mut sel_bot = Tensor::zeros(&[n, b]);
    for i in 0..b {
        sel_bot.set(a + i, i, 1.0);
    }
    let st = tape.constant(sel_top);
    let sb = tape.constant(sel_bot);
    let x = tape.matmul(st, top)?;
    let y = tape.matmul(sb, bottom)?;
    tape.add(x, y)
}

/// −mean cos(online_i, target_i); the target is not differentiated.
pub fn simsiam_loss(online: &Tensor, target: &Tensor) -> Result<f64> {
    LossKind::SimSiamCosine.evaluate(online, target)
}

pub fn vicreg_loss(u: &Tensor, v: &Tensor, invariance: f64, variance: f64, covariance: f64) -> Result<f64> {
    LossKind::Vicreg {
        invariance,
        variance,
        covariance,
    }
    .evaluate(u, v)
}

pub fn barlow_loss(u: &Tensor, v: &Tensor, off_diagonal: f64) -> Result<f64> {
    LossKind::BarlowTwins { off_diagonal }.evaluate(u, v)
}

/// Eigenvalues of ∇²ᵤL(u, v) with a numerical rank.
#[derive(Clone, Debug, Serialize)]
pub struct IntrinsicSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Absolute cutoff actually applied.
    pub threshold: f64,
    /// Largest |r̂ᵀHr̂| over rows, r̂ the unit radial direction of a row;
    /// only for cosine losses.
    pub radial_form: Option<f64>,
    pub radial_in_kernel: Option<bool>,
}

/// Dense ∇²ᵤL over the flattened `u`. `rel_threshold` is scaled by
/// `max(1, max |λ|)` to form the cutoff; magnitudes above it count toward the rank.
pub fn intrinsic_hessian_rank(
    loss: &dyn PairLoss,
    u: &Tensor,
    v: &Tensor,
    rel_threshold: f64,
) -> Result<IntrinsicSpectrum> {
    let hess = loss_hessian(loss, u, v)?;
    let eig = sym_eig(&hess)?;
    let scale = eig.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let threshold = rel_threshold * scale;
    let rank = eig.values.iter().filter(|x| x.abs() > threshold).count();
    let (radial_form, radial_in_kernel) = if loss.is_cosine() {
        let um = u.as_matrix();
        let (b, k) = um.dims2();
        let mut worst = 0.0f64;
        for i in 0..b {
            let mut r = vec![0.0; b * k];
            let n = crate::tensor::norm(um.row(i));
            for j in 0..k {
                r[i * k + j] = um.get(i, j) / n;
            }
            let hr = hess.matvec(&r)?;
            worst = worst.max(crate::tensor::dot(&r, &hr).abs());
        }
        (Some(worst), Some(worst <= threshold))
    } else {
        (None, None)
    };
    Ok(IntrinsicSpectrum {
        eigenvalues: eig.values,
        rank,
        threshold,
        radial_form,
        radial_in_kernel,
    })
}

/// Dense ∇²ᵤL(u, v) with `v` held fixed.
pub fn loss_hessian(loss: &dyn PairLoss, u: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (um, vm) = (u.as_matrix(), v.as_matrix());
    let mut op = HvpOperator::with_leaves(std::slice::from_ref(&um), |tape, xs| {
        let b = tape.constant(vm.clone());
        loss.build(tape, xs[0], b)
    })?;
    op.dense()
}

/// ∇ᵤL(u, v).
pub fn loss_gradient(loss: &dyn PairLoss, u: &Tensor, v: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.leaf(u.as_matrix());
    let b = tape.leaf(v.as_matrix());
    let l = loss.build(&mut tape, a, b)?;
    let g = tape.grad(l, &[a])?[0];
    Ok(tape.value(g).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_nce_orthogonal_negative() {
        let a = Tensor::vector(vec![1.0, 0.0]);
        let n = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        let l = info_nce(&a, &a, &n, 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn info_nce_identical_negatives() {
        let a = Tensor::vector(vec![0.6, 0.8]);
        let negs = Tensor::from_rows(&vec![vec![0.6, 0.8]; 4]).unwrap();
        for tau in [0.1, 0.7, 3.0] {
            let l = info_nce(&a, &a, &negs, tau).unwrap();
            assert!((l - 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn info_nce_rejects_zero_rows() {
        let a = Tensor::vector(vec![0.0, 0.0]);
        let n = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        assert!(matches!(info_nce(&a, &n, &n, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn simsiam_extremes() {
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        assert!((simsiam_loss(&x, &x).unwrap() + 1.0).abs() < 1e-15);
        let a = Tensor::matrix(1, 2, vec![1.0, 0.0]);
        let b = Tensor::matrix(1, 2, vec![0.0, 3.0]);
        assert_eq!(simsiam_loss(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn simsiam_target_gets_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 0.3, -0.1]));
        let b = tape.leaf(Tensor::matrix(2, 2, vec![0.5, 0.1, 2.0, 1.0]));
        let l = LossKind::SimSiamCosine.build(&mut tape, a, b).unwrap();
        let g = tape.grad(l, &[b]).unwrap()[0];
        assert!(tape.value(g).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vicreg_whitened_pair_is_zero() {
        // columns with unit unbiased std and zero covariance
        let u = Tensor::matrix(4, 2, vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let scale = (3.0f64 / 4.0).sqrt();
        let u = u.scale(scale);
        let l = vicreg_loss(&u, &u, 25.0, 25.0, 1.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn vicreg_constant_batch_variance_term() {
        let u = Tensor::full(&[5, 3], 0.7);
        let mu = 2.0;
        let l = vicreg_loss(&u, &u, 1.0, mu, 1.0).unwrap();
        let per_branch = mu * 3.0 * (1.0 - VICREG_EPS.sqrt());
        assert!((l - 2.0 * per_branch).abs() < 1e-12);
    }

    #[test]
    fn barlow_identity_correlation_is_zero() {
        let u = Tensor::matrix(4, 2, vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        assert!(barlow_loss(&u, &u, 0.5).unwrap().abs() < 1e-15);
    }

    #[test]
    fn barlow_zero_variance_feature() {
        let u = Tensor::matrix(3, 2, vec![1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        assert!(matches!(barlow_loss(&u, &u, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pair_mse_intrinsic_spectrum() {
        let u = Tensor::vector(vec![0.3, -0.2, 1.0, 0.5]);
        let v = Tensor::vector(vec![0.0, 0.1, 0.4, -0.5]);
        let s = intrinsic_hessian_rank(&LossKind::PairMse, &u, &v, DEFAULT_RANK_THRESHOLD).unwrap();
        assert_eq!(s.rank, 4);
        assert!(s.eigenvalues.iter().all(|&l| (l - 2.0).abs() < 1e-14));
        assert!(s.radial_form.is_none());
    }

    #[test]
    fn scaled_loss_scales_value() {
        let u = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        let v = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        let s = Scaled {
            factor: 3.0,
            loss: LossKind::PairMse,
        };
        assert_eq!(s.evaluate(&u, &v).unwrap(), 3.0 * LossKind::PairMse.evaluate(&u, &v).unwrap());
    }
}
