//! Function-level derivatives built on the tape: gradients, exact
//! Hessian-vector products via double backpropagation, Jacobians and
//! dense Hessians for small problems.

use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::tensor::Tensor;

/// Largest point dimension for which a dense Hessian is assembled.
pub const DENSE_HESSIAN_CAP: usize = 512;

/// A map that can be recorded on a tape.
pub trait DiffMap {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var>;

    /// False for maps containing batch normalization.
    fn supports_second_order(&self) -> bool {
        true
    }
}

impl<F> DiffMap for F
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self(tape, x)
    }
}

fn check_scalar_finite(tape: &Tape, y: Var, context: &str) -> Result<f64> {
    let v = tape.scalar(y).map_err(|_| Error::NonScalarOutput(tape.value(y).shape().to_vec()))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(context.to_string()));
    }
    Ok(v)
}

fn require_second_order(f: &impl DiffMap) -> Result<()> {
    if f.supports_second_order() {
        Ok(())
    } else {
        Err(Error::SecondOrderThroughBatchNorm)
    }
}

/// ∇f(point), shaped like `point`.
pub fn gradient(f: &impl DiffMap, point: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f.apply(&mut tape, x)?;
    check_scalar_finite(&tape, y, "gradient forward value")?;
    let g = tape.grad(y, &[x])?[0];
    tape.value(g).clone().reshape(point.shape())
}

/// ∇²f(point)·direction by differentiating ⟨∇f, direction⟩.
pub fn hvp(f: &impl DiffMap, point: &Tensor, direction: &Tensor) -> Result<Tensor> {
    if point.numel() != direction.numel() {
        return Err(Error::ShapeMismatch {
            op: "hvp",
            left: point.shape().to_vec(),
            right: direction.shape().to_vec(),
        });
    }
    let mut op = HvpOperator::new(f, point)?;
    let out = op.apply(direction.data())?;
    Tensor::new(point.shape().to_vec(), out)
}

/// k×d Jacobian; row i is the gradient of the i-th output entry (row-major).
pub fn jacobian(f: &impl DiffMap, point: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f.apply(&mut tape, x)?;
    let out_shape = tape.value(y).shape().to_vec();
    let k = tape.value(y).numel();
    let d = point.numel();
    if !tape.value(y).is_finite() {
        return Err(Error::NonFinite("jacobian forward value".into()));
    }
    let mark = tape.checkpoint();
    let mut rows = Vec::with_capacity(k * d);
    for i in 0..k {
        let mut seed = Tensor::zeros(&out_shape);
        seed.data_mut()[i] = 1.0;
        let g = tape.vjp(y, &seed, &[x])?[0];
        rows.extend_from_slice(tape.value(g).data());
        tape.rewind(mark);
    }
    Ok(Tensor::matrix(k, d, rows))
}

/// Dense Hessian assembled from `d` Hessian-vector products, then symmetrized.
pub fn dense_hessian(f: &impl DiffMap, point: &Tensor) -> Result<Tensor> {
    let d = point.numel();
    if d > DENSE_HESSIAN_CAP {
        return Err(Error::DimensionTooLarge {
            dim: d,
            cap: DENSE_HESSIAN_CAP,
        });
    }
    let mut op = HvpOperator::new(f, point)?;
    op.dense()
}

/// Reusable `v ↦ ∇²f·v`. The forward pass and first backward pass are
/// recorded once; each product appends a second pass and rewinds.
pub struct HvpOperator {
    tape: Tape,
    leaves: Vec<Var>,
    grads: Vec<Var>,
    shapes: Vec<(usize, usize)>,
    value: f64,
    mark: usize,
    dim: usize,
}

impl HvpOperator {
    pub fn new(f: &impl DiffMap, point: &Tensor) -> Result<Self> {
        require_second_order(f)?;
        Self::with_leaves(std::slice::from_ref(point), |tape, xs| f.apply(tape, xs[0]))
    }

    /// Hessian over the concatenation of several inputs (e.g. all parameter tensors).
    pub fn with_leaves(
        points: &[Tensor],
        f: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>,
    ) -> Result<Self> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone())).collect();
        let y = f(&mut tape, &leaves)?;
        let value = check_scalar_finite(&tape, y, "hvp forward value")?;
        let grads = tape.grad(y, &leaves)?;
        let shapes = points.iter().map(Tensor::dims2).collect();
        let dim = points.iter().map(Tensor::numel).sum();
        let mark = tape.checkpoint();
        Ok(HvpOperator {
            tape,
            leaves,
            grads,
            shapes,
            value,
            mark,
            dim,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn gradient(&self) -> Vec<f64> {
        self.grads
            .iter()
            .flat_map(|g| self.tape.value(*g).data().iter().copied())
            .collect()
    }

    pub fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "hvp direction",
                left: vec![self.dim],
                right: vec![v.len()],
            });
        }
        let mut offset = 0;
        let mut terms = Vec::with_capacity(self.leaves.len());
        for (g, &(r, c)) in self.grads.iter().zip(&self.shapes) {
            let n = r * c;
            let dir = self.tape.constant(Tensor::matrix(r, c, v[offset..offset + n].to_vec()));
            offset += n;
            terms.push(self.tape.dot(*g, dir)?);
        }
        let mut s = terms[0];
        for t in &terms[1..] {
            s = self.tape.add(s, *t)?;
        }
        let hv = self.tape.grad(s, &self.leaves)?;
        let mut out = Vec::with_capacity(self.dim);
        for h in &hv {
            out.extend_from_slice(self.tape.value(*h).data());
        }
        self.tape.rewind(self.mark);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("hessian-vector product".into()));
        }
        Ok(out)
    }

    /// Stacks H·eᵢ for every basis vector and symmetrizes.
    pub fn dense(&mut self) -> Result<Tensor> {
        let d = self.dim;
        if d > DENSE_HESSIAN_CAP {
            return Err(Error::DimensionTooLarge {
                dim: d,
                cap: DENSE_HESSIAN_CAP,
            });
        }
        let mut data = Vec::with_capacity(d * d);
        let mut e = vec![0.0; d];
        for i in 0..d {
            e[i] = 1.0;
            data.extend(self.apply(&e)?);
            e[i] = 0.0;
        }
        Tensor::matrix(d, d, data).symmetrize()
    }
}

impl LinearOperator for HvpOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        HvpOperator::apply(self, v)
    }
}
