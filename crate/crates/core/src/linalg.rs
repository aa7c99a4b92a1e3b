//! Thin wrappers over nalgebra decompositions plus the matrix-free operator trait.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A linear map on ℝⁿ known only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>>;
}

/// Dense square matrix viewed as an operator.
pub struct DenseOperator<'a>(pub &'a Tensor);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        self.0.matvec(v)
    }
}

/// Wraps a closure as an operator of fixed dimension.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        (self.f)(v)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: Tensor,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

pub fn sym_eig(a: &Tensor) -> Result<SymEig> {
    let (r, c) = a.dims2();
    if r != c {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let eig = SymmetricEigen::new(a.symmetrize()?.to_dmatrix());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Tensor::zeros(&[r, r]);
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        // sign convention: largest-magnitude entry positive
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        for row in 0..r {
            vectors.set(row, col, s * v[row]);
        }
    }
    Ok(SymEig { values, vectors })
}

pub fn eigenvalues(a: &Tensor) -> Result<Vec<f64>> {
    Ok(sym_eig(a)?.values)
}

/// Singular values, descending.
pub fn singular_values(a: &Tensor) -> Vec<f64> {
    if a.numel() == 0 {
        return vec![];
    }
    let m: DMatrix<f64> = a.to_dmatrix();
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn spectral_norm(a: &Tensor) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Right singular vectors as rows (top first), with singular values.
pub fn principal_axes(a: &Tensor) -> (Vec<f64>, Tensor) {
    let m = a.to_dmatrix();
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cols = a.cols();
    let mut rows = Vec::with_capacity(order.len() * cols);
    for &i in &order {
        let row: Vec<f64> = vt.row(i).iter().copied().collect();
        let pivot = row.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        rows.extend(row.iter().map(|x| s * x));
    }
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    (values, Tensor::matrix(order.len(), cols, rows))
}

/// Modified Gram-Schmidt on the rows of `a`. Fails when a row is
/// numerically dependent on the previous ones.
pub fn orthonormalize_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2();
    let mut rows: Vec<Vec<f64>> = a.row_vectors();
    for i in 0..r {
        let scale = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        for j in 0..i {
            let (done, rest) = rows.split_at_mut(i);
            let p: f64 = done[j].iter().zip(&rest[0]).map(|(x, y)| x * y).sum();
            for (x, q) in rest[0].iter_mut().zip(&done[j]) {
                *x -= p * q;
            }
        }
        let n = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= 1e-10 * scale.max(f64::MIN_POSITIVE) || n == 0.0 {
            return Err(Error::Degenerate(format!("row {i} is linearly dependent")));
        }
        rows[i].iter_mut().for_each(|x| *x /= n);
    }
    Ok(Tensor::matrix(r, c, rows.into_iter().flatten().collect()))
}

/// Sample covariance (n−1 denominator) of the rows of `z`.
pub fn covariance(z: &Tensor) -> Result<Tensor> {
    let (n, d) = z.dims2();
    if n < 2 {
        return Err(Error::invalid("covariance needs at least 2 rows"));
    }
    let centered = center_rows(z);
    let mut cov = centered.transpose().matmul(&centered)?;
    cov.data_mut().iter_mut().for_each(|x| *x /= (n - 1) as f64);
    debug_assert_eq!(cov.dims2(), (d, d));
    Ok(cov)
}

/// Subtracts the column means.
pub fn center_rows(z: &Tensor) -> Tensor {
    let (n, d) = z.dims2();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(z.row(i)) {
            *m += x / n as f64;
        }
    }
    let mut out = z.as_matrix();
    for i in 0..n {
        for j in 0..d {
            out.set(i, j, z.get(i, j) - mean[j]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_descending() {
        let a = Tensor::matrix(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let v0 = e.vector(0);
        assert!(v0[0] > 0.0 && (v0[0] - v0[1]).abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_detects_dependence() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(orthonormalize_rows(&a).is_err());
        let b = Tensor::matrix(2, 3, vec![1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let q = orthonormalize_rows(&b).unwrap();
        let qqt = q.matmul(&q.transpose()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qqt.get(i, j) - e).abs() < 1e-14);
            }
        }
    }
}
