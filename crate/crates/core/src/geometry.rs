//! Effective Hessian of the loss with respect to the backbone
//! representation, split into the pullback metric `G = Jᵀ ∇²L J` and the
//! interaction `M = Σᵢ ρᵢ ∇²hᵢ`; whitening heads; isotropy and
//! perturbation diagnostics.

use serde::Serialize;

use crate::autodiff::{jacobian, DiffMap, HvpOperator, Tape, Var, DENSE_HESSIAN_CAP};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_rows, spectral_norm, sym_eig, LinearOperator};
use crate::losses::{loss_gradient, loss_hessian, PairLoss};
use crate::models::Pipeline;
use crate::objective::{pipeline_tensors, record_objective, PipelineVars};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct EffectiveHessianParts {
    /// Pullback metric Jᵀ ∇²L J (symmetrized).
    pub g: Tensor,
    /// Interaction term Σ ρᵢ ∇²hᵢ (symmetrized).
    pub m: Tensor,
    /// ∇ₕL, flattened.
    pub rho: Vec<f64>,
    /// Head Jacobian over the flattened representation.
    pub jacobian: Tensor,
    /// ∇²ₕL.
    pub loss_hessian: Tensor,
}

impl EffectiveHessianParts {
    pub fn h_eff(&self) -> Result<Tensor> {
        self.g.add(&self.m)
    }

    pub fn rho_norm(&self) -> f64 {
        crate::tensor::norm(&self.rho)
    }
}

fn require_second_order(head: &dyn DiffMap) -> Result<()> {
    if head.supports_second_order() {
        Ok(())
    } else {
        Err(Error::SecondOrderThroughBatchNorm)
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > DENSE_HESSIAN_CAP {
        Err(Error::DimensionTooLarge {
            dim: n,
            cap: DENSE_HESSIAN_CAP,
        })
    } else {
        Ok(())
    }
}

struct Composite<'a> {
    head: &'a dyn DiffMap,
    loss: &'a dyn PairLoss,
    partner: &'a Tensor,
}

impl DiffMap for Composite<'_> {
    fn apply(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let u = self.head.apply(tape, z)?;
        let p = tape.constant(self.partner.as_matrix());
        self.loss.build(tape, u, p)
    }

    fn supports_second_order(&self) -> bool {
        self.head.supports_second_order()
    }
}

/// `⟨ρ, h(z)⟩` with ρ held constant.
struct Contracted<'a> {
    head: &'a dyn DiffMap,
    rho: Tensor,
}

impl DiffMap for Contracted<'_> {
    fn apply(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let u = self.head.apply(tape, z)?;
        let r = tape.constant(self.rho.clone());
        tape.dot(u, r)
    }
}

/// `z` may be one representation or a batch (rows); `partner` has the
/// shape of the head output and is held fixed.
pub fn effective_hessian_parts(
    head: &dyn DiffMap,
    loss: &dyn PairLoss,
    z: &Tensor,
    partner: &Tensor,
) -> Result<EffectiveHessianParts> {
    require_second_order(head)?;
    let zm = z.as_matrix();
    check_cap(zm.numel())?;
    let mut tape = Tape::new();
    let x = tape.leaf(zm.clone());
    let u_var = head.apply(&mut tape, x)?;
    let u = tape.value(u_var).clone();
    check_cap(u.numel())?;
    if u.dims2() != partner.as_matrix().dims2() {
        return Err(Error::ShapeMismatch {
            op: "effective hessian partner",
            left: u.shape().to_vec(),
            right: partner.shape().to_vec(),
        });
    }
    let j = jacobian(&|t: &mut Tape, v: Var| head.apply(t, v), &zm)?;
    let hl = loss_hessian(loss, &u, partner)?;
    let rho_t = loss_gradient(loss, &u, partner)?;
    let g = j.transpose().matmul(&hl)?.matmul(&j)?.symmetrize()?;
    let contracted = Contracted { head, rho: rho_t.clone() };
    let m = HvpOperator::new(&contracted, &zm)?.dense()?;
    Ok(EffectiveHessianParts {
        g,
        m,
        rho: rho_t.into_data(),
        jacobian: j,
        loss_hessian: hl,
    })
}

/// Dense Hessian of `z ↦ L(h(z), partner)` assembled directly.
pub fn effective_hessian_dense(head: &dyn DiffMap, loss: &dyn PairLoss, z: &Tensor, partner: &Tensor) -> Result<Tensor> {
    require_second_order(head)?;
    effective_hessian_operator(head, loss, z, partner)?.dense()
}

/// Matrix-free `v ↦ H_eff·v` over the flattened representation.
pub fn effective_hessian_operator(
    head: &dyn DiffMap,
    loss: &dyn PairLoss,
    z: &Tensor,
    partner: &Tensor,
) -> Result<HvpOperator> {
    let c = Composite { head, loss, partner };
    HvpOperator::new(&c, &z.as_matrix())
}

/// `v ↦ ∇²_params L·v` over every backbone, head and predictor tensor, for
/// the two-view objective on fixed views.
pub fn parameter_hessian_operator(
    pipeline: &Pipeline,
    loss: &dyn PairLoss,
    views: [&Tensor; 2],
    symmetric: bool,
) -> Result<HvpOperator> {
    if !pipeline.supports_second_order() {
        return Err(Error::SecondOrderThroughBatchNorm);
    }
    let tensors = pipeline_tensors(pipeline);
    HvpOperator::with_leaves(&tensors, |tape, leaves| {
        let vars = PipelineVars::split(pipeline, leaves)?;
        let a = tape.constant(views[0].as_matrix());
        let b = tape.constant(views[1].as_matrix());
        Ok(record_objective(tape, pipeline, &vars, [a, b], loss, symmetric)?.loss)
    })
}

#[derive(Clone, Debug)]
pub struct WhiteningHead {
    /// k×d.
    pub w: Tensor,
    pub r: usize,
    /// r×d with orthonormal rows.
    pub q: Tensor,
    /// k×r leading eigenvectors of the loss Hessian.
    pub u_r: Tensor,
    /// Leading eigenvalues, descending, all positive.
    pub lambda_r: Vec<f64>,
}

/// `W = U_r Λ_r^{-1/2} Q`, so that `WᵀHW` is the orthogonal projector onto
/// the row space of `Q`.
pub fn whitening_head_construct(loss_hessian: &Tensor, subspace: &Tensor, rel_threshold: f64) -> Result<WhiteningHead> {
    let (k, k2) = loss_hessian.dims2();
    if k != k2 {
        return Err(Error::invalid("loss Hessian must be square"));
    }
    let eig = sym_eig(loss_hessian)?;
    let scale = eig.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let cutoff = rel_threshold * scale;
    if let Some(neg) = eig.values.iter().find(|&&l| l < -cutoff) {
        return Err(Error::invalid(format!("loss Hessian is not PSD (eigenvalue {neg:.3e})")));
    }
    let r = eig.values.iter().filter(|&&l| l > cutoff).count();
    let span = subspace.as_matrix();
    let (sr, d) = span.dims2();
    if sr != r {
        return Err(Error::invalid(format!("subspace has dimension {sr}, loss Hessian has rank {r}")));
    }
    let q = orthonormalize_rows(&span)?;
    let mut u_r = Tensor::zeros(&[k, r]);
    for c in 0..r {
        let s = 1.0 / eig.values[c].sqrt();
        for row in 0..k {
            u_r.set(row, c, eig.vectors.get(row, c) * s);
        }
    }
    let w = u_r.matmul(&q)?;
    debug_assert_eq!(w.dims2(), (k, d));
    let mut plain = Tensor::zeros(&[k, r]);
    for c in 0..r {
        for row in 0..k {
            plain.set(row, c, eig.vectors.get(row, c));
        }
    }
    Ok(WhiteningHead {
        w,
        r,
        q,
        u_r: plain,
        lambda_r: eig.values[..r].to_vec(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotropyReport {
    /// Largest deviation along the trajectory.
    pub sup_deviation: f64,
    pub per_point: Vec<f64>,
    /// Intrinsic rank at each point.
    pub ranks: Vec<usize>,
    pub rank_varies: bool,
}

/// `‖P_Sᵀ G P_S − I_r‖_F` with `P_S` the top-r eigenvectors of the pullback
/// metric at each point and `r` the intrinsic rank of the loss Hessian there.
pub fn isotropy_deviation(
    head: &dyn DiffMap,
    loss: &dyn PairLoss,
    trajectory: &[(Tensor, Tensor)],
    rel_threshold: f64,
) -> Result<IsotropyReport> {
    if trajectory.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    let mut per_point = Vec::with_capacity(trajectory.len());
    let mut ranks = Vec::with_capacity(trajectory.len());
    for (z, partner) in trajectory {
        let parts = effective_hessian_parts(head, loss, z, partner)?;
        let hl_eig = sym_eig(&parts.loss_hessian)?;
        let scale = hl_eig.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let r = hl_eig.values.iter().filter(|&&l| l.abs() > rel_threshold * scale).count();
        let r = r.min(parts.g.rows());
        let g_eig = sym_eig(&parts.g)?;
        let d = parts.g.rows();
        let mut p = Tensor::zeros(&[d, r]);
        for c in 0..r {
            for row in 0..d {
                p.set(row, c, g_eig.vectors.get(row, c));
            }
        }
        let restricted = p.transpose().matmul(&parts.g)?.matmul(&p)?;
        let dev = restricted.sub(&Tensor::identity(r))?.frobenius_norm();
        per_point.push(dev);
        ranks.push(r);
    }
    let sup_deviation = per_point.iter().copied().fold(0.0, f64::max);
    let rank_varies = ranks.iter().any(|&r| r != ranks[0]);
    Ok(IsotropyReport {
        sup_deviation,
        per_point,
        ranks,
        rank_varies,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationCheck {
    /// ‖J_φ − J_*‖₂
    pub epsilon: f64,
    /// ‖J_*‖₂
    pub l_lip: f64,
    /// ‖H‖₂
    pub m_bound: f64,
    /// ‖J_φᵀHJ_φ − J_*ᵀHJ_*‖₂
    pub lhs: f64,
    /// 2·L·M·ε + M·ε²
    pub rhs: f64,
    pub holds: bool,
}

/// All norms are exact spectral norms from singular values.
pub fn perturbation_bound_check(j_star: &Tensor, j_phi: &Tensor, h_loss: &Tensor) -> Result<PerturbationCheck> {
    let (js, jp, h) = (j_star.as_matrix(), j_phi.as_matrix(), h_loss.as_matrix());
    if js.dims2() != jp.dims2() || h.dims2() != (js.rows(), js.rows()) {
        return Err(Error::ShapeMismatch {
            op: "perturbation check",
            left: js.shape().to_vec(),
            right: h.shape().to_vec(),
        });
    }
    let g_phi = jp.transpose().matmul(&h)?.matmul(&jp)?;
    let g_star = js.transpose().matmul(&h)?.matmul(&js)?;
    let lhs = spectral_norm(&g_phi.sub(&g_star)?);
    let epsilon = spectral_norm(&jp.sub(&js)?);
    let l_lip = spectral_norm(&js);
    let m_bound = spectral_norm(&h);
    let rhs = 2.0 * l_lip * m_bound * epsilon + m_bound * epsilon * epsilon;
    Ok(PerturbationCheck {
        epsilon,
        l_lip,
        m_bound,
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10,
    })
}

/// Flat parameter direction (in [`pipeline_tensors`] order) that moves the
/// backbone output at `input` by exactly `dz`, using only the weight of the
/// last backbone layer: `δW = dz·aᵀ/‖a‖²` with `a` the input to that layer.
pub fn lift_representation_direction(pipeline: &Pipeline, input: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
    let net = &pipeline.backbone.net;
    let spec = net.spec();
    if spec.output_normalize || spec.use_batch_norm {
        return Err(Error::invalid("lifting needs an affine, unnormalized last backbone layer"));
    }
    if dz.len() != net.output_dim() || input.len() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "lift direction",
            left: vec![net.input_dim(), net.output_dim()],
            right: vec![input.len(), dz.len()],
        });
    }
    let params = &pipeline.backbone.params;
    let x = Tensor::matrix(1, input.len(), input.to_vec());
    let pre = net.hidden_pre_activations(params, &x)?;
    let a: Vec<f64> = match pre.last() {
        None => input.to_vec(),
        Some(h) => {
            let act = spec.activations[spec.num_layers() - 2];
            h.data().iter().map(|&v| act.eval(v)).collect()
        }
    };
    let aa: f64 = a.iter().map(|v| v * v).sum();
    if aa == 0.0 {
        return Err(Error::Degenerate("last backbone layer input is zero".into()));
    }
    let last = format!("layer{}.weight", spec.num_layers() - 1);
    let mut out = Vec::new();
    for block in pipeline.blocks() {
        for (name, t) in block.params.iter() {
            if std::ptr::eq(block, &pipeline.backbone) && name == last {
                out.extend(dz.iter().flat_map(|&di| a.iter().map(move |&aj| di * aj / aa)));
            } else {
                out.extend(std::iter::repeat_n(0.0, t.numel()));
            }
        }
    }
    Ok(out)
}

/// `uᵀHu / uᵀu` for a symmetric operator.
pub fn rayleigh_quotient(op: &mut dyn LinearOperator, u: &[f64]) -> Result<f64> {
    let uu: f64 = u.iter().map(|x| x * x).sum();
    if uu == 0.0 {
        return Err(Error::Degenerate("zero direction".into()));
    }
    let hu = op.apply(u)?;
    Ok(u.iter().zip(&hu).map(|(a, b)| a * b).sum::<f64>() / uu)
}
