//! Synthetic classed clusters with Lie-group augmentations whose orbits and
//! tangents are known in closed form.
//!
//! Axes 0 and 1 form the nuisance plane; class centers live on the
//! remaining axes, so rotations in the plane never move class identity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Pipeline;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub ambient_dim: usize,
    pub cluster_spread: f64,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Canonical pose `(a, 0)` added in the nuisance plane, so that a plane
    /// rotation has a recoverable angle.
    #[serde(default)]
    pub nuisance_amplitude: f64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim < 4 {
            return Err(Error::invalid("ambient dimension must be at least 4"));
        }
        if self.num_classes == 0 || self.samples_per_class == 0 {
            return Err(Error::invalid("need at least one class and one sample per class"));
        }
        if self.cluster_spread < 0.0 || !self.cluster_spread.is_finite() {
            return Err(Error::invalid("cluster spread must be finite and non-negative"));
        }
        if !self.nuisance_amplitude.is_finite() {
            return Err(Error::invalid("nuisance amplitude must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// n×d, rows grouped by class.
    pub points: Tensor,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn rows(&self, idx: &[usize]) -> Tensor {
        let d = self.dim();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(self.sample(i));
        }
        Tensor::matrix(idx.len(), d, out)
    }

    /// Shuffled index batches; the last short batch is kept if it has ≥ 2 rows.
    pub fn batches(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx.chunks(batch_size.max(1))
            .filter(|c| c.len() >= 2 || self.len() < 2)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// `count` anchor indices, classes taken in turn and a uniform draw
    /// within each class. Draws avoid repeats until a class is exhausted.
    pub fn select_anchors(&self, count: usize, seed: u64) -> Vec<usize> {
        let classes = self.labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &l) in self.labels.iter().enumerate() {
            pools[l].push(i);
        }
        pools.retain(|p| !p.is_empty());
        if pools.is_empty() {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut remaining = pools.clone();
        (0..count)
            .map(|k| {
                let c = k % pools.len();
                if remaining[c].is_empty() {
                    remaining[c] = pools[c].clone();
                }
                let j = rng.random_range(0..remaining[c].len());
                remaining[c].swap_remove(j)
            })
            .collect()
    }

    /// `label, x0, x1, …` with a header row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, &l) in self.labels.iter().enumerate() {
            let mut rec = vec![l.to_string()];
            rec.extend(self.sample(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn unit_gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::tensor::norm(&v);
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Minimum center separation sought by rejection sampling.
const MIN_CENTER_SEPARATION: f64 = 0.5;

pub fn generate_clusters(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.ambient_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    while centers.len() < spec.num_classes {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..200 {
            let mut c = vec![0.0; 2];
            c.extend(unit_gaussian(&mut rng, d - 2));
            let sep = centers
                .iter()
                .map(|o| crate::tensor::norm(&o.iter().zip(&c).map(|(a, b)| a - b).collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min);
            if sep >= MIN_CENTER_SEPARATION {
                best = Some((sep, c));
                break;
            }
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, c));
            }
        }
        centers.push(best.expect("at least one candidate").1);
    }
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, mu) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for (j, m) in mu.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                let pose = if j == 0 { spec.nuisance_amplitude } else { 0.0 };
                data.push(m + pose + spec.cluster_spread * noise);
            }
            labels.push(c);
        }
    }
    Ok(Dataset {
        points: Tensor::matrix(n, d, data),
        labels,
        centers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    /// Rotation by ξ radians taking axis `i` toward axis `j`.
    PlaneRotation { i: usize, j: usize },
    /// Multiplication by e^ξ.
    UniformScale,
    /// Shift by ξ along one axis.
    AxisTranslation { axis: usize },
}

impl Generator {
    fn check(&self, d: usize) -> Result<()> {
        let ok = match *self {
            Generator::PlaneRotation { i, j } => i < d && j < d && i != j,
            Generator::UniformScale => true,
            Generator::AxisTranslation { axis } => axis < d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("generator {self:?} invalid in dimension {d}")))
        }
    }

    fn act(&self, x: &mut [f64], xi: f64) {
        match *self {
            Generator::PlaneRotation { i, j } => {
                let (c, s) = (xi.cos(), xi.sin());
                let (a, b) = (x[i], x[j]);
                x[i] = c * a - s * b;
                x[j] = s * a + c * b;
            }
            Generator::UniformScale => {
                let f = xi.exp();
                x.iter_mut().for_each(|v| *v *= f);
            }
            Generator::AxisTranslation { axis } => x[axis] += xi,
        }
    }

    /// d/dξ of the action at ξ = 0.
    pub fn tangent(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Generator::PlaneRotation { i, j } => {
                let mut t = vec![0.0; x.len()];
                t[i] = -x[j];
                t[j] = x[i];
                t
            }
            Generator::UniformScale => x.to_vec(),
            Generator::AxisTranslation { axis } => {
                let mut t = vec![0.0; x.len()];
                t[axis] = 1.0;
                t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub continuous: Vec<Generator>,
    /// Sampling range per continuous generator.
    pub param_ranges: Vec<(f64, f64)>,
    /// Discrete sign flip of one axis with probability ½; not part of the tangent space.
    #[serde(default)]
    pub sign_flip: Option<usize>,
}

impl AugmentationSpec {
    /// Rotations in the nuisance plane with angles in `[-max_angle, max_angle]`.
    pub fn plane_rotation(max_angle: f64) -> Self {
        AugmentationSpec {
            continuous: vec![Generator::PlaneRotation { i: 0, j: 1 }],
            param_ranges: vec![(-max_angle, max_angle)],
            sign_flip: None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.continuous.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for g in &self.continuous {
            g.check(d)?;
        }
        if self.param_ranges.len() != self.continuous.len() {
            return Err(Error::invalid("one parameter range per continuous generator"));
        }
        if let Some(a) = self.sign_flip {
            if a >= d {
                return Err(Error::invalid(format!("sign flip axis {a} outside dimension {d}")));
            }
        }
        Ok(())
    }

    /// Uniform draw from the parameter ranges plus a sign-flip coin.
    pub fn sample(&self, rng: &mut impl Rng) -> (Vec<f64>, bool) {
        let xi = self
            .param_ranges
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect();
        let flip = self.sign_flip.is_some() && rng.random_bool(0.5);
        (xi, flip)
    }

    /// Independently augmented copy of each row.
    pub fn augment_batch(&self, batch: &Tensor, rng: &mut impl Rng) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let (n, d) = batch.dims2();
        let mut out = Vec::with_capacity(n * d);
        let mut params = Vec::with_capacity(n);
        for i in 0..n {
            let (xi, flip) = self.sample(rng);
            let mut y = augment(batch.row(i), self, &xi)?;
            if flip {
                let a = self.sign_flip.expect("flip implies an axis");
                y[a] = -y[a];
            }
            out.extend(y);
            params.push(xi);
        }
        Ok((Tensor::matrix(n, d, out), params))
    }
}

/// Applies the continuous generators in order; ξ = 0 is the identity.
pub fn augment(x: &[f64], spec: &AugmentationSpec, xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != spec.continuous.len() {
        return Err(Error::invalid(format!(
            "{} parameters for {} generators",
            xi.len(),
            spec.continuous.len()
        )));
    }
    for g in &spec.continuous {
        g.check(x.len())?;
    }
    let mut y = x.to_vec();
    for (g, &p) in spec.continuous.iter().zip(xi) {
        g.act(&mut y, p);
    }
    Ok(y)
}

/// d×m matrix whose columns are the generator tangents at `x`.
pub fn aug_tangent_basis(x: &[f64], spec: &AugmentationSpec) -> Result<Tensor> {
    let d = x.len();
    let m = spec.continuous.len();
    let mut t = Tensor::zeros(&[d, m]);
    for (c, g) in spec.continuous.iter().enumerate() {
        g.check(d)?;
        for (r, v) in g.tangent(x).into_iter().enumerate() {
            t.set(r, c, v);
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Backbone,
    Head,
}

#[derive(Clone, Debug)]
pub struct Orbit {
    pub anchor: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub stage: Stage,
    /// True when the stage output is ℓ2-normalized by the network itself.
    pub normalized: bool,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `xi, z0, z1, …` with a header row.
    pub fn to_csv(&self) -> Result<String> {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["xi".to_string()];
        header.extend((0..dim).map(|j| format!("z{j}")));
        w.write_record(&header).map_err(csv_err)?;
        for (xi, p) in self.xi_grid.iter().zip(&self.points) {
            let mut rec = vec![xi.to_string()];
            rec.extend(p.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Ten angles from 0° to 45°.
pub fn quarter_sweep_grid() -> Vec<f64> {
    linspace(0.0, std::f64::consts::FRAC_PI_4, 10)
}

/// Twelve angles 0°, 30°, …, 330°.
pub fn full_circle_grid() -> Vec<f64> {
    (0..12).map(|i| i as f64 * std::f64::consts::PI / 6.0).collect()
}

/// Sweeps one generator (others held at 0) and records the chosen stage.
pub fn orbit_sweep(
    x: &[f64],
    spec: &AugmentationSpec,
    generator: usize,
    grid: &[f64],
    stage: Stage,
    pipeline: Option<&Pipeline>,
) -> Result<Orbit> {
    if grid.len() < 3 {
        return Err(Error::invalid("an orbit grid needs at least 3 values"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("orbit grid must be sorted"));
    }
    if generator >= spec.continuous.len() {
        return Err(Error::invalid(format!("no generator {generator}")));
    }
    let d = x.len();
    let mut inputs = Vec::with_capacity(grid.len() * d);
    let mut xi = vec![0.0; spec.continuous.len()];
    for &g in grid {
        xi[generator] = g;
        inputs.extend(augment(x, spec, &xi)?);
    }
    let batch = Tensor::matrix(grid.len(), d, inputs);
    let (out, normalized) = match stage {
        Stage::Input => (batch, false),
        Stage::Backbone => {
            let p = pipeline.ok_or_else(|| Error::invalid("this stage needs a network"))?;
            (p.backbone.forward(&batch)?, p.backbone.net.spec().output_normalize)
        }
        Stage::Head => {
            let p = pipeline.ok_or_else(|| Error::invalid("this stage needs a network"))?;
            (p.embed(&batch)?, p.head.net.spec().output_normalize)
        }
    };
    Ok(Orbit {
        anchor: x.to_vec(),
        xi_grid: grid.to_vec(),
        points: out.row_vectors(),
        stage,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn spec(d: usize) -> DatasetSpec {
        DatasetSpec {
            num_classes: 2,
            ambient_dim: d,
            cluster_spread: 0.1,
            samples_per_class: 10,
            seed: 5,
            nuisance_amplitude: 0.0,
        }
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let ds = generate_clusters(&DatasetSpec {
            cluster_spread: 0.0,
            ..spec(6)
        })
        .unwrap();
        for (i, &l) in ds.labels.iter().enumerate() {
            assert_eq!(ds.sample(i), ds.centers[l].as_slice());
        }
    }

    #[test]
    fn centers_are_unit_and_off_the_nuisance_plane() {
        let ds = generate_clusters(&spec(4)).unwrap();
        for c in &ds.centers {
            assert_eq!((c[0], c[1]), (0.0, 0.0));
            assert!((crate::tensor::norm(c) - 1.0).abs() < 1e-12);
        }
        let diff: Vec<f64> = ds.centers[0].iter().zip(&ds.centers[1]).map(|(a, b)| a - b).collect();
        assert!(crate::tensor::norm(&diff) > 0.0);
    }

    #[test]
    fn small_dimension_rejected() {
        assert!(generate_clusters(&spec(3)).is_err());
    }

    #[test]
    fn quarter_turn() {
        let a = AugmentationSpec::plane_rotation(1.0);
        let y = augment(&[1.0, 0.0, 0.5, 0.0], &a, &[FRAC_PI_2]).unwrap();
        assert!(y[0].abs() < 1e-16 && (y[1] - 1.0).abs() < 1e-16 && y[2] == 0.5);
    }

    #[test]
    fn zero_parameters_are_identity() {
        let a = AugmentationSpec {
            continuous: vec![
                Generator::PlaneRotation { i: 0, j: 1 },
                Generator::UniformScale,
                Generator::AxisTranslation { axis: 2 },
            ],
            param_ranges: vec![(0.0, 1.0); 3],
            sign_flip: None,
        };
        let x = [0.3, -1.0, 2.0, 0.7];
        assert_eq!(augment(&x, &a, &[0.0, 0.0, 0.0]).unwrap(), x.to_vec());
        assert!(augment(&x, &a, &[0.0]).is_err());
    }

    #[test]
    fn rotation_tangent_and_translation_tangent() {
        let a = AugmentationSpec {
            continuous: vec![Generator::PlaneRotation { i: 0, j: 1 }, Generator::AxisTranslation { axis: 2 }],
            param_ranges: vec![(0.0, 1.0); 2],
            sign_flip: None,
        };
        let t = aug_tangent_basis(&[1.0, 0.0, 0.0, 0.0], &a).unwrap();
        assert_eq!(t.column(0), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.column(1), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn grids() {
        let q = quarter_sweep_grid();
        assert_eq!(q.len(), 10);
        assert_eq!(q[0], 0.0);
        assert!((q[9] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        let f = full_circle_grid();
        assert_eq!(f.len(), 12);
        assert!((f[11].to_degrees() - 330.0).abs() < 1e-9);
    }

    #[test]
    fn short_grid_rejected() {
        let a = AugmentationSpec::plane_rotation(1.0);
        assert!(orbit_sweep(&[1.0, 0.0, 0.0, 0.0], &a, 0, &[0.0, 0.1], Stage::Input, None).is_err());
    }

    #[test]
    fn anchors_cycle_through_classes() {
        let ds = generate_clusters(&spec(4)).unwrap();
        let a = ds.select_anchors(15, 3);
        assert_eq!(a.len(), 15);
        for (k, &i) in a.iter().enumerate() {
            assert_eq!(ds.labels[i], k % 2);
        }
        let mut first: Vec<usize> = a[..10].iter().copied().filter(|&i| ds.labels[i] == 0).collect();
        first.sort_unstable();
        first.dedup();
        assert_eq!(first.len(), 5);
        assert_eq!(a, ds.select_anchors(15, 3));
    }

    #[test]
    fn dataset_csv_header() {
        let ds = generate_clusters(&spec(4)).unwrap();
        let csv = ds.to_csv().unwrap();
        assert!(csv.starts_with("label,x0,x1,x2,x3\n"));
        assert_eq!(csv.lines().count(), 21);
    }
}
