//! Orbit geometry, sensitivity ranks and batch statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::autodiff::{jacobian, DiffMap, Tape, Var};
use crate::data::{aug_tangent_basis, AugmentationSpec};
use crate::error::{Error, Result};
use crate::linalg::{center_rows, covariance, eigenvalues, singular_values, spectral_norm};
use crate::tensor::{dot, norm, Tensor};

/// Added to the intra-orbit distance before dividing.
pub const EPS_RATIO: f64 = 1e-8;

/// Floor on the smallest covariance eigenvalue in the condition number.
pub const KAPPA_FLOOR: f64 = 1e-7;

/// Random unit combinations of the tangent basis checked for singularity.
pub const SINGULARITY_SAMPLES: usize = 32;

/// Random unit directions in the baseline average.
pub const BASELINE_SAMPLES: usize = 64;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for p in points {
        c.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    c.iter_mut().for_each(|a| *a /= points.len() as f64);
    c
}

/// Mean norm of the second differences of consecutive points.
pub fn local_curvature(points: &[Vec<f64>]) -> Result<f64> {
    let t = points.len();
    if t < 3 {
        return Err(Error::invalid("curvature needs at least 3 points"));
    }
    let total: f64 = points
        .windows(3)
        .map(|w| {
            let dd: Vec<f64> = (0..w[1].len()).map(|k| w[2][k] - 2.0 * w[1][k] + w[0][k]).collect();
            norm(&dd)
        })
        .sum();
    Ok(total / (t - 2) as f64)
}

/// Mean squared distance to the centroid.
pub fn orbit_spread(points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("spread needs at least one point"));
    }
    let c = centroid(points);
    Ok(points.iter().map(|p| dist(p, &c).powi(2)).sum::<f64>() / points.len() as f64)
}

fn mean_pairwise(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += dist(&points[i], &points[j]);
        }
    }
    s / (n * (n - 1) / 2) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassOrbitDistances {
    pub d_intra: f64,
    pub d_inter: f64,
    pub ratio: f64,
}

/// `orbits[c]` holds the orbits of class `c`. Class centroids are taken
/// over every augmented point of the class.
pub fn class_orbit_distances(orbits: &[Vec<Vec<Vec<f64>>>]) -> Result<ClassOrbitDistances> {
    if orbits.len() < 2 {
        return Err(Error::invalid("class/orbit distances need at least 2 classes"));
    }
    let mut intra = Vec::new();
    let mut centroids = Vec::with_capacity(orbits.len());
    for (c, class) in orbits.iter().enumerate() {
        if class.is_empty() {
            return Err(Error::invalid(format!("class {c} has no orbits")));
        }
        for o in class {
            if o.len() < 2 {
                return Err(Error::invalid("each orbit needs at least 2 points"));
            }
            intra.push(mean_pairwise(o));
        }
        let all: Vec<Vec<f64>> = class.iter().flatten().cloned().collect();
        centroids.push(centroid(&all));
    }
    let d_intra = intra.iter().sum::<f64>() / intra.len() as f64;
    let d_inter = mean_pairwise(&centroids);
    Ok(ClassOrbitDistances {
        d_intra,
        d_inter,
        ratio: d_inter / (d_intra + EPS_RATIO),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveRank {
    pub value: f64,
    /// All points coincide; `value` is 1 by convention.
    pub degenerate: bool,
}

/// exp of the entropy of the normalized squared singular values of the
/// centered points.
pub fn effective_rank(points: &[Vec<f64>]) -> Result<EffectiveRank> {
    if points.len() < 2 {
        return Err(Error::invalid("effective rank needs at least 2 points"));
    }
    let m = Tensor::from_rows(points)?;
    effective_rank_of(&center_rows(&m))
}

/// Effective rank from an already centered (or any) matrix.
pub fn effective_rank_of(centered: &Tensor) -> Result<EffectiveRank> {
    let s = singular_values(centered);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(EffectiveRank {
            value: 1.0,
            degenerate: true,
        });
    }
    let kept: Vec<f64> = s.into_iter().filter(|&x| x >= 1e-12 * smax).map(|x| x * x).collect();
    let total: f64 = kept.iter().sum();
    let h: f64 = kept
        .iter()
        .map(|&e| {
            let p = e / total;
            -p * p.ln()
        })
        .sum();
    Ok(EffectiveRank {
        value: h.exp(),
        degenerate: false,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

fn mean_cosine(anchor: &[f64], views: &[Vec<f64>]) -> Result<f64> {
    if views.is_empty() {
        return Err(Error::invalid("alignment needs at least one view"));
    }
    let mut s = 0.0;
    for v in views {
        s += cosine(anchor, v)?;
    }
    Ok(s / views.len() as f64)
}

/// Mean head cosine to the anchor minus mean backbone cosine to the anchor.
pub fn alignment_gain(
    backbone_anchor: &[f64],
    backbone_views: &[Vec<f64>],
    head_anchor: &[f64],
    head_views: &[Vec<f64>],
) -> Result<f64> {
    Ok(mean_cosine(head_anchor, head_views)? - mean_cosine(backbone_anchor, backbone_views)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitReport {
    pub curvature: f64,
    pub spread: f64,
    pub d_intra: f64,
    pub d_inter: f64,
    pub class_orbit_ratio: f64,
    pub effective_rank: f64,
    pub alignment_gain: f64,
}

impl OrbitReport {
    pub const CSV_HEADER: [&'static str; 7] = [
        "local_curvature",
        "mean_orbit_spread",
        "intra_orbit_distance",
        "inter_class_distance",
        "class_orbit_ratio",
        "effective_rank",
        "alignment_gain",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.curvature,
            self.spread,
            self.d_intra,
            self.d_inter,
            self.class_orbit_ratio,
            self.effective_rank,
            self.alignment_gain,
        ]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityReport {
    /// d×m
    pub s_z: Tensor,
    /// k×m
    pub s_h: Tensor,
    pub rank_z: usize,
    pub rank_h: usize,
    pub m: usize,
    /// rank_z − m − rank_h; non-negative when the hierarchy holds.
    pub hierarchy_slack: i64,
    pub singular_z: Vec<f64>,
    pub singular_h: Vec<f64>,
    /// ‖J_h‖₂ at the representation.
    pub head_gain: f64,
}

fn as_diffmap(f: &dyn DiffMap) -> impl Fn(&mut Tape, Var) -> Result<Var> + '_ {
    move |t, v| f.apply(t, v)
}

/// Sensitivities of backbone and head outputs to the augmentation
/// parameters at ξ = 0. `rank_z` counts singular values of `S_z` above
/// `threshold·σmax(S_z)`; `rank_h` counts those of `S_h = J_h S_z` above
/// `threshold·‖J_h‖₂·σmax(S_z)`, the largest value `S_h` could reach.
pub fn sensitivity_ranks(
    backbone: &dyn DiffMap,
    head: &dyn DiffMap,
    x: &[f64],
    aug: &AugmentationSpec,
    threshold: f64,
) -> Result<SensitivityReport> {
    let t = aug_tangent_basis(x, aug)?;
    let xt = Tensor::vector(x.to_vec());
    let jf = jacobian(&as_diffmap(backbone), &xt)?;
    let s_z = jf.matmul(&t)?;
    let mut tape = Tape::new();
    let xv = tape.leaf(xt.clone());
    let zv = backbone.apply(&mut tape, xv)?;
    let z = tape.value(zv).clone();
    let jh = jacobian(&as_diffmap(head), &z)?;
    let s_h = jh.matmul(&s_z)?;
    let singular_z = singular_values(&s_z);
    let singular_h = singular_values(&s_h);
    let zmax = singular_z.first().copied().unwrap_or(0.0);
    let head_gain = spectral_norm(&jh);
    let rank_z = singular_z.iter().filter(|&&s| s > threshold * zmax).count();
    let rank_h = singular_h.iter().filter(|&&s| s > threshold * head_gain * zmax).count();
    let m = aug.num_params();
    Ok(SensitivityReport {
        s_z,
        s_h,
        rank_z,
        rank_h,
        m,
        hierarchy_slack: rank_z as i64 - m as i64 - rank_h as i64,
        singular_z,
        singular_h,
        head_gain,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularityReport {
    /// max vᵀJᵀJv over sampled unit v in the span of the basis.
    pub residual: f64,
    /// Mean of the same quadratic form over the samples.
    pub mean_aug: f64,
    /// Mean over random unit directions of the whole space.
    pub random_baseline: f64,
}

impl SingularityReport {
    /// mean_aug / random_baseline.
    pub fn ratio(&self) -> f64 {
        self.mean_aug / self.random_baseline
    }
}

fn unit(v: Vec<f64>) -> Result<Vec<f64>> {
    let n = norm(&v);
    if n == 0.0 {
        return Err(Error::Degenerate("zero direction".into()));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

fn form(j: &Tensor, v: &[f64]) -> Result<f64> {
    let jv = j.matvec(v)?;
    Ok(dot(&jv, &jv))
}

/// `vᵀJ_hᵀJ_hv` over the basis columns plus random unit combinations of
/// them, against random unit directions of the representation space.
pub fn singularity_residual(head: &dyn DiffMap, z: &[f64], basis: &Tensor, seed: u64) -> Result<SingularityReport> {
    let (d, m) = basis.dims2();
    if d != z.len() {
        return Err(Error::ShapeMismatch {
            op: "singularity basis",
            left: vec![z.len()],
            right: basis.shape().to_vec(),
        });
    }
    let j = jacobian(&as_diffmap(head), &Tensor::vector(z.to_vec()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forms = Vec::with_capacity(m + SINGULARITY_SAMPLES);
    for c in 0..m {
        let col = basis.column(c);
        if norm(&col) == 0.0 {
            return Err(Error::Degenerate(format!("tangent column {c} is zero")));
        }
        forms.push(form(&j, &unit(col)?)?);
    }
    for _ in 0..SINGULARITY_SAMPLES {
        let coef: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let v = basis.matvec(&coef)?;
        forms.push(form(&j, &unit(v)?)?);
    }
    let mut base = 0.0;
    for _ in 0..BASELINE_SAMPLES {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        base += form(&j, &unit(v)?)?;
    }
    Ok(SingularityReport {
        residual: forms.iter().copied().fold(0.0, f64::max),
        mean_aug: forms.iter().sum::<f64>() / forms.len() as f64,
        random_baseline: base / BASELINE_SAMPLES as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchStatistics {
    /// Mean per-dimension standard deviation.
    pub variance: f64,
    pub condition_number: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

/// Statistics of a batch of representations, rows ℓ2-normalized first
/// unless `raw`.
pub fn batch_statistics(z: &Tensor, raw: bool) -> Result<BatchStatistics> {
    let (n, d) = z.dims2();
    if n < 2 {
        return Err(Error::invalid("batch statistics need at least 2 rows"));
    }
    let mut m = z.as_matrix();
    if !raw {
        for i in 0..n {
            let r = norm(m.row(i));
            if r == 0.0 {
                return Err(Error::Degenerate(format!("row {i} has zero norm")));
            }
            for j in 0..d {
                m.set(i, j, m.get(i, j) / r);
            }
        }
    }
    let cov = covariance(&m)?;
    let variance = (0..d).map(|j| cov.get(j, j).max(0.0).sqrt()).sum::<f64>() / d as f64;
    let eig = eigenvalues(&cov)?;
    let lambda_max = eig[0];
    let lambda_min = *eig.last().expect("d ≥ 1");
    Ok(BatchStatistics {
        variance,
        condition_number: lambda_max / lambda_min.max(KAPPA_FLOOR),
        lambda_max,
        lambda_min,
    })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            op: "spearman",
            left: vec![xs.len()],
            right: vec![ys.len()],
        });
    }
    if xs.len() < 3 {
        return Err(Error::invalid("spearman needs at least 3 pairs"));
    }
    if xs.iter().chain(ys).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("a rank vector has zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
