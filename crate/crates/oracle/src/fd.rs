//! Central-difference stencils.

/// Central-difference gradient, step `h` per coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// k×d Jacobian by central differences, returned as rows.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    assert!(h > 0.0);
    let k = f(x).len();
    let mut rows = vec![vec![0.0; x.len()]; k];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..k {
            rows[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    rows
}

/// Four-point stencil for every Hessian entry, symmetrized.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    assert!(h > 0.0);
    let d = x.len();
    let mut hm = vec![vec![0.0; d]; d];
    let mut p = x.to_vec();
    let f0 = f(x);
    for i in 0..d {
        p[i] = x[i] + h;
        let fp = f(&p);
        p[i] = x[i] - h;
        let fm = f(&p);
        p[i] = x[i];
        hm[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            hm[i][j] = v;
            hm[j][i] = v;
        }
    }
    hm
}

/// (∇f(x + εv) − ∇f(x − εv)) / 2ε from a gradient routine.
pub fn fd_directional_gradient(
    grad: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    v: &[f64],
    eps: f64,
) -> Vec<f64> {
    let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    grad(&xp)
        .iter()
        .zip(grad(&xm))
        .map(|(p, m)| (p - m) / (2.0 * eps))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivative() {
        let g = fd_gradient(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn linear_hessian_vanishes() {
        let h = fd_hessian(|x| 2.0 * x[0] - 3.0 * x[1] + 0.5, &[0.2, -1.0], 1e-4);
        assert!(h.iter().flatten().all(|v| v.abs() <= 1e-8));
    }
}
