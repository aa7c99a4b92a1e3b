//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum JacobiError {
    NotSquare,
    Asymmetric(f64),
    TooLarge(usize),
}

impl fmt::Display for JacobiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JacobiError::NotSquare => write!(f, "matrix is not square"),
            JacobiError::Asymmetric(v) => write!(f, "matrix is asymmetric (max |a_ij - a_ji| = {v:.3e})"),
            JacobiError::TooLarge(n) => write!(f, "dimension {n} exceeds the oracle cap of 512"),
        }
    }
}

impl std::error::Error for JacobiError {}

#[derive(Debug, Clone)]
pub struct DenseEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    /// Off-diagonal Frobenius norm when the sweeps stopped.
    pub off_diagonal: f64,
}

impl DenseEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn off_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i][j] * a[i][j];
            }
        }
    }
    s.sqrt()
}

/// Runs up to `sweeps` cyclic sweeps, stopping once the off-diagonal mass is
/// below 1e-12 relative to the Frobenius norm.
pub fn dense_eig(a: &[Vec<f64>], sweeps: usize) -> Result<DenseEig, JacobiError> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(JacobiError::NotSquare);
    }
    if n > 512 {
        return Err(JacobiError::TooLarge(n));
    }
    let mut asym: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((a[i][j] - a[j][i]).abs());
            scale = scale.max(a[i][j].abs());
        }
    }
    if asym > 1e-8 * scale.max(1.0) {
        return Err(JacobiError::Asymmetric(asym));
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[i][j] + a[j][i])).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let frob = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..sweeps {
        if off_norm(&m) <= 1e-12 * frob.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let off = off_norm(&m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values = idx.iter().map(|&i| m[i][i]).collect();
    let vectors = idx
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    Ok(DenseEig {
        values,
        vectors,
        off_diagonal: off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_fixed() {
        let e = dense_eig(&[vec![3.0, 0.0], vec![0.0, -1.0]], 10).unwrap();
        assert_eq!(e.values, vec![-1.0, 3.0]);
    }

    #[test]
    fn two_by_two() {
        let e = dense_eig(&[vec![2.0, 1.0], vec![1.0, 2.0]], 20).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reconstruction() {
        let n = 9;
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let x = next();
                a[i][j] = x;
                a[j][i] = x;
            }
        }
        let e = dense_eig(&a, 50).unwrap();
        assert!(e.off_diagonal <= 1e-12 * 3.0);
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| e.vectors[k][i] * e.values[k] * e.vectors[k][j]).sum();
                err += (r - a[i][j]).powi(2);
            }
        }
        assert!(err.sqrt() <= 1e-10);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(matches!(
            dense_eig(&[vec![1.0, 2.0], vec![0.0, 1.0]], 5),
            Err(JacobiError::Asymmetric(_))
        ));
    }
}
