//! Wengert tape with re-entrant reverse mode.
//!
//! Every backward pass records its own arithmetic on the same tape, so a
//! gradient is itself a differentiable expression. That is all a
//! Hessian-vector product needs: differentiate `⟨∇f, v⟩` once more.
//!
//! Nodes carry a differentiation order. Forward nodes have order 0, nodes
//! created while differentiating an order-`o` root have order `o + 1`, and
//! a root of order 2 is refused. Values are always stored as matrices;
//! callers reshape at the boundary.

use crate::autodiff::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Highest root order that may still be differentiated.
const MAX_DIFFERENTIABLE_ORDER: u8 = 1;

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    MatMulTN(Var, Var),
    Transpose(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    BroadcastScalar(Var),
    Reshape(Var),
    Activation(Var, ActivationKind, u8),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    Sqrt(Var),
    BatchNorm(Var, f64),
    BatchNormGrad(Var, Var),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | MatMulNT(a, b) | MatMulTN(a, b)
            | BatchNormGrad(a, b) => [Some(a), Some(b)],
            Neg(a) | Scale(a, _) | Offset(a) | Transpose(a) | SumAll(a) | SumRows(a)
            | SumCols(a) | BroadcastRows(a) | BroadcastCols(a) | BroadcastScalar(a)
            | Reshape(a) | Activation(a, _, _) | Exp(a) | Ln(a) | Recip(a) | Sqrt(a)
            | BatchNorm(a, _) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    order: u8,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current tape length; pass to [`Tape::rewind`] to drop everything recorded after it.
    pub fn checkpoint(&self) -> usize {
        self.nodes.len()
    }

    pub fn rewind(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn order(&self, v: Var) -> u8 {
        self.nodes[v.0].order
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let order = op
            .parents()
            .iter()
            .flatten()
            .map(|p| self.nodes[p.0].order)
            .max()
            .unwrap_or(0);
        self.push_with_order(op, value, order)
    }

    fn push_with_order(&mut self, op: Op, value: Tensor, order: u8) -> Var {
        self.nodes.push(Node { op, value, order });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Scalars become 1×1 and vectors 1×n.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_with_order(Op::Leaf, t.as_matrix(), 0)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Same value, but the reverse pass treats it as a constant.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.push_with_order(Op::Leaf, t, 0)
    }

    pub fn stop_gradient(&mut self, v: Var) -> Var {
        self.detach(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b)).map_err(|_| mismatch("add", self.value(a), self.value(b)))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b)).map_err(|_| mismatch("sub", self.value(a), self.value(b)))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .map_err(|_| mismatch("mul", self.value(a), self.value(b)))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::Offset(a), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (av.dims2(), bv.dims2());
        if k != k2 {
            return Err(mismatch("matmul", av, bv));
        }
        let v = Tensor::matrix(m, n, matmul_nn(av.data(), bv.data(), m, k, n));
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let ((m, k), (n, k2)) = (av.dims2(), bv.dims2());
        if k != k2 {
            return Err(mismatch("matmul_nt", av, bv));
        }
        let v = Tensor::matrix(m, n, matmul_nt(av.data(), bv.data(), m, k, n));
        Ok(self.push(Op::MatMulNT(a, b), v))
    }

    /// aᵀ · b
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let ((k, m), (k2, n)) = (av.dims2(), bv.dims2());
        if k != k2 {
            return Err(mismatch("matmul_tn", av, bv));
        }
        let v = Tensor::matrix(m, n, matmul_tn(av.data(), bv.data(), m, k, n));
        Ok(self.push(Op::MatMulTN(a, b), v))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::matrix(1, 1, vec![s]))
    }

    /// Column sums: r×c → 1×c.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        self.push(Op::SumRows(a), Tensor::matrix(1, c, out))
    }

    /// Row sums: r×c → r×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let r = t.rows();
        let out = (0..r).map(|i| t.row(i).iter().sum()).collect();
        self.push(Op::SumCols(a), Tensor::matrix(r, 1, out))
    }

    /// 1×c → rows×c.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != 1 {
            return Err(Error::invalid(format!("broadcast_rows expects 1×c, got {:?}", t.shape())));
        }
        let c = t.cols();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(t.data());
        }
        Ok(self.push(Op::BroadcastRows(a), Tensor::matrix(rows, c, out)))
    }

    /// r×1 → r×cols.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.cols() != 1 {
            return Err(Error::invalid(format!("broadcast_cols expects r×1, got {:?}", t.shape())));
        }
        let r = t.rows();
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            out.extend(std::iter::repeat_n(t.data()[i], cols));
        }
        Ok(self.push(Op::BroadcastCols(a), Tensor::matrix(r, cols, out)))
    }

    /// 1×1 → rows×cols.
    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.value(a).item()?;
        Ok(self.push(Op::BroadcastScalar(a), Tensor::full(&[rows, cols], s)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a).clone().reshape(&[rows, cols])?;
        Ok(self.push(Op::Reshape(a), t))
    }

    pub fn activation(&mut self, a: Var, kind: ActivationKind) -> Var {
        let v = self.value(a).map(|x| kind.eval(x));
        self.push(Op::Activation(a, kind, 0), v)
    }

    fn activation_derivative(&mut self, a: Var, kind: ActivationKind, order: u8) -> Result<Var> {
        let t = self.value(a);
        let v = match order {
            1 => t.map(|x| kind.first(x)),
            2 => t.map(|x| kind.second(x)),
            _ => return Err(Error::ThirdOrder),
        };
        Ok(self.push(Op::Activation(a, kind, order), v))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    /// Per-column standardization over the batch with biased variance.
    /// First-order only: differentiating the resulting gradient fails.
    pub fn batch_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if r < 2 {
            return Err(Error::invalid("batch norm needs at least 2 rows"));
        }
        let (mean, inv_std) = column_moments(t, eps);
        let mut out = t.clone();
        for i in 0..r {
            for j in 0..c {
                out.set(i, j, (t.get(i, j) - mean[j]) * inv_std[j]);
            }
        }
        Ok(self.push(Op::BatchNorm(a, eps), out))
    }

    // ---- composites -------------------------------------------------------

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same shape")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum_all(p))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// m×c + 1×c
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let r = self.value(m).rows();
        let b = self.broadcast_rows(row, r)?;
        self.add(m, b)
    }

    /// Euclidean norm of each row: r×c → r×1.
    pub fn row_norms(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        let s = self.sum_cols(sq);
        self.sqrt(s)
    }

    /// Scales each row to unit ℓ2 norm. Zero rows yield non-finite values.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let c = self.value(a).cols();
        let n = self.row_norms(a);
        let inv = self.recip(n);
        let b = self.broadcast_cols(inv, c)?;
        self.mul(a, b)
    }

    /// Row-wise log-sum-exp, r×c → r×1, shifted by a detached row max.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let maxes: Vec<f64> = (0..r)
            .map(|i| t.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let m = self.constant(Tensor::matrix(r, 1, maxes));
        let mb = self.broadcast_cols(m, c)?;
        let shifted = self.sub(a, mb)?;
        let e = self.exp(shifted);
        let s = self.sum_cols(e);
        let l = self.ln(s);
        self.add(l, m)
    }

    // ---- reverse mode -----------------------------------------------------

    /// Gradient of a scalar root with respect to `wrt`, recorded on the tape.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let shape = self.value(root).shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarOutput(shape));
        }
        self.vjp(root, &Tensor::matrix(1, 1, vec![1.0]), wrt)
    }

    /// Vector-Jacobian product: `seed` has the shape of `root`.
    pub fn vjp(&mut self, root: Var, seed: &Tensor, wrt: &[Var]) -> Result<Vec<Var>> {
        let root_order = self.order(root);
        if root_order > MAX_DIFFERENTIABLE_ORDER {
            return Err(Error::ThirdOrder);
        }
        let seed = seed.as_matrix();
        if seed.dims2() != self.value(root).dims2() {
            return Err(mismatch("vjp seed", &seed, self.value(root)));
        }
        let pass_order = root_order + 1;
        let seed = self.push_with_order(Op::Leaf, seed, pass_order);

        let n = root.0 + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for i in 0..n {
            if !needs[i] {
                needs[i] = self.nodes[i].op.parents().iter().flatten().any(|p| needs[p.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        grads[root.0] = Some(seed);
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op;
            if matches!(op, Op::Leaf) {
                continue;
            }
            self.backward_op(Var(i), op, g, &needs, &mut grads)?;
        }

        wrt.iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let z = Tensor::zeros(self.value(*w).shape());
                    Ok(self.push_with_order(Op::Leaf, z, pass_order))
                }
            })
            .collect()
    }

    fn accumulate(&mut self, grads: &mut [Option<Var>], target: Var, contrib: Var) -> Result<()> {
        grads[target.0] = Some(match grads[target.0] {
            None => contrib,
            Some(prev) => self.add(prev, contrib)?,
        });
        Ok(())
    }

    fn backward_op(
        &mut self,
        out: Var,
        op: Op,
        g: Var,
        needs: &[bool],
        grads: &mut [Option<Var>],
    ) -> Result<()> {
        let need = |v: Var| needs[v.0];
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if need(a) {
                    self.accumulate(grads, a, g)?;
                }
                if need(b) {
                    self.accumulate(grads, b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    self.accumulate(grads, a, g)?;
                }
                if need(b) {
                    let ng = self.neg(g);
                    self.accumulate(grads, b, ng)?;
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    let ga = self.mul(g, b)?;
                    self.accumulate(grads, a, ga)?;
                }
                if need(b) {
                    let gb = self.mul(g, a)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::Neg(a) => {
                let ga = self.neg(g);
                self.accumulate(grads, a, ga)?;
            }
            Op::Scale(a, s) => {
                let ga = self.scale(g, s);
                self.accumulate(grads, a, ga)?;
            }
            Op::Offset(a) => self.accumulate(grads, a, g)?,
            Op::MatMul(a, b) => {
                if need(a) {
                    let ga = self.matmul_nt(g, b)?;
                    self.accumulate(grads, a, ga)?;
                }
                if need(b) {
                    let gb = self.matmul_tn(a, g)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::MatMulNT(a, b) => {
                if need(a) {
                    let ga = self.matmul(g, b)?;
                    self.accumulate(grads, a, ga)?;
                }
                if need(b) {
                    let gb = self.matmul_tn(g, a)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::MatMulTN(a, b) => {
                if need(a) {
                    let ga = self.matmul_nt(b, g)?;
                    self.accumulate(grads, a, ga)?;
                }
                if need(b) {
                    let gb = self.matmul(a, g)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::Transpose(a) => {
                let ga = self.transpose(g);
                self.accumulate(grads, a, ga)?;
            }
            Op::SumAll(a) => {
                let (r, c) = self.value(a).dims2();
                let ga = self.broadcast_scalar(g, r, c)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::SumRows(a) => {
                let r = self.value(a).rows();
                let ga = self.broadcast_rows(g, r)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::SumCols(a) => {
                let c = self.value(a).cols();
                let ga = self.broadcast_cols(g, c)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::BroadcastRows(a) => {
                let ga = self.sum_rows(g);
                self.accumulate(grads, a, ga)?;
            }
            Op::BroadcastCols(a) => {
                let ga = self.sum_cols(g);
                self.accumulate(grads, a, ga)?;
            }
            Op::BroadcastScalar(a) => {
                let ga = self.sum_all(g);
                self.accumulate(grads, a, ga)?;
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(a).dims2();
                let ga = self.reshape(g, r, c)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Activation(a, kind, order) => {
                let d = self.activation_derivative(a, kind, order + 1)?;
                let ga = self.mul(g, d)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Exp(a) => {
                let ga = self.mul(g, out)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Ln(a) => {
                let inv = self.recip(a);
                let ga = self.mul(g, inv)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::Recip(a) => {
                let sq = self.square(out);
                let p = self.mul(g, sq)?;
                let ga = self.neg(p);
                self.accumulate(grads, a, ga)?;
            }
            Op::Sqrt(a) => {
                let inv = self.recip(out);
                let half = self.scale(inv, 0.5);
                let ga = self.mul(g, half)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::BatchNorm(a, eps) => {
                let ga = self.batch_norm_backward(a, out, g, eps)?;
                self.accumulate(grads, a, ga)?;
            }
            Op::BatchNormGrad(_, _) => return Err(Error::SecondOrderThroughBatchNorm),
        }
        Ok(())
    }

    fn batch_norm_backward(&mut self, x: Var, xhat: Var, g: Var, eps: f64) -> Result<Var> {
        let (xt, xh, gt) = (self.value(x), self.value(xhat), self.value(g));
        let (r, c) = xt.dims2();
        let (_, inv_std) = column_moments(xt, eps);
        let mut out = Tensor::zeros(&[r, c]);
        for j in 0..c {
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for i in 0..r {
                mean_g += gt.get(i, j);
                mean_gx += gt.get(i, j) * xh.get(i, j);
            }
            mean_g /= r as f64;
            mean_gx /= r as f64;
            for i in 0..r {
                out.set(i, j, inv_std[j] * (gt.get(i, j) - mean_g - xh.get(i, j) * mean_gx));
            }
        }
        Ok(self.push(Op::BatchNormGrad(x, g), out))
    }
}

fn column_moments(t: &Tensor, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let (r, c) = t.dims2();
    let mut mean = vec![0.0; c];
    for i in 0..r {
        for (m, x) in mean.iter_mut().zip(t.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut var = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            let d = t.get(i, j) - mean[j];
            var[j] += d * d;
        }
    }
    let inv_std = var.iter().map(|v| 1.0 / (v / r as f64 + eps).sqrt()).collect();
    (mean, inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = t.dot(x, x).unwrap();
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(t.value(g[0]).data(), &[2.0, 4.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = t.leaf(Tensor::scalar(3.0));
        let y = t.scale(c, 2.0);
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(t.value(g[0]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.grad(x, &[x]), Err(Error::NonScalarOutput(_))));
    }

    #[test]
    fn third_pass_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.3, -0.2]));
        let a = t.activation(x, ActivationKind::Tanh);
        let y = t.sum_all(a);
        let g1 = t.grad(y, &[x]).unwrap()[0];
        let s1 = t.sum_all(g1);
        let g2 = t.grad(s1, &[x]).unwrap()[0];
        assert_eq!(t.order(g2), 2);
        let s2 = t.sum_all(g2);
        assert_eq!(t.grad(s2, &[x]), Err(Error::ThirdOrder));
    }

    #[test]
    fn stop_gradient_is_one_sided() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.5, -2.0, 0.5]));
        let sx = t.stop_gradient(x);
        let y = t.dot(sx, x).unwrap();
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(t.value(g[0]).data(), &[1.5, -2.0, 0.5]);

        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.5, -2.0, 0.5]));
        let sx = t.stop_gradient(x);
        let y = t.dot(sx, sx).unwrap();
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(t.value(g[0]).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_norm_first_order_only() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.3, 4.0]));
        let n = t.batch_norm(x, 1e-5).unwrap();
        let w = t.constant(Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let q = t.mul(n, n).unwrap();
        let y = t.dot(q, w).unwrap();
        let g = t.grad(y, &[x]).unwrap()[0];
        assert!(t.value(g).is_finite());
        let s = t.sum_all(g);
        assert_eq!(t.grad(s, &[x]), Err(Error::SecondOrderThroughBatchNorm));
    }

    #[test]
    fn rewind_restores_length() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let mark = t.checkpoint();
        let _ = t.square(x);
        assert_eq!(t.len(), mark + 1);
        t.rewind(mark);
        assert_eq!(t.len(), mark);
    }
}
