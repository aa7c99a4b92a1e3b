//! O(n²) statistics computed the slow, obvious way.

use crate::l2_dist;

pub fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for p in points {
        for k in 0..d {
            c[k] += p[k];
        }
    }
    c.iter().map(|v| v / points.len() as f64).collect()
}

/// Mean over unordered pairs i < j of ‖p_i − p_j‖.
pub fn mean_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            s += l2_dist(&points[i], &points[j]);
            n += 1;
        }
    }
    s / n as f64
}

/// Two-pass mean squared distance to the centroid.
pub fn spread(points: &[Vec<f64>]) -> f64 {
    let c = centroid(points);
    points.iter().map(|p| l2_dist(p, &c).powi(2)).sum::<f64>() / points.len() as f64
}

/// (1/(T−2)) Σ ‖z_{t+1} − 2z_t + z_{t−1}‖ written out term by term.
pub fn second_difference_mean(points: &[Vec<f64>]) -> f64 {
    let t = points.len();
    let mut s = 0.0;
    for i in 1..t - 1 {
        let v: Vec<f64> = (0..points[i].len())
            .map(|k| points[i + 1][k] - 2.0 * points[i][k] + points[i - 1][k])
            .collect();
        s += v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    s / (t - 2) as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (crate::l2(a) * crate::l2(b))
}

/// Average ranks (1-based) with ties sharing the mean of their positions,
/// computed by counting.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&average_ranks(xs), &average_ranks(ys))
}
