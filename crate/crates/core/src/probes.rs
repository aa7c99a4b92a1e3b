//! Linear and MLP probes on frozen representations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ActivationKind, Tape};
use crate::error::{Error, Result};
use crate::models::{Block, InitScheme, NetworkSpec};
use crate::tensor::Tensor;
use crate::train::{optimizer_step, OptimizerConfig, OptimizerState};

pub const DEFAULT_PROBE_EPOCHS: usize = 50;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind {
    Linear,
    Mlp { hidden_width: usize, activation: ActivationKind },
}

impl ProbeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp { .. } => "mlp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ProbeTask {
    ClassifyLabel,
    /// Regress the parameter of one continuous generator.
    RegressXi { generator: usize },
}

impl ProbeTask {
    pub fn name(&self) -> String {
        match self {
            ProbeTask::ClassifyLabel => "classify_label".into(),
            ProbeTask::RegressXi { generator } => format!("regress_xi{generator}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub task: ProbeTask,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Seeds the train/test split and the probe initialization.
    pub split_seed: u64,
}

impl ProbeSpec {
    pub fn new(kind: ProbeKind, task: ProbeTask, split_seed: u64) -> Self {
        ProbeSpec {
            kind,
            task,
            epochs: DEFAULT_PROBE_EPOCHS,
            optimizer: OptimizerConfig::adam(3e-2),
            batch_size: 32,
            split_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ProbeKind::Mlp { hidden_width: 0, .. } = self.kind {
            return Err(Error::invalid("MLP probe needs hidden width ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("probe batch size must be positive"));
        }
        self.optimizer.validate()
    }
}

/// Probe targets, aligned with the representation rows.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(&'a [f64]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeFit {
    /// Held-out accuracy (classification) or R² (regression).
    pub score: f64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub probe: Block,
}

/// MLP score minus linear score on the same split.
pub fn nonlinearity_gap(linear_score: f64, mlp_score: f64) -> f64 {
    mlp_score - linear_score
}

/// Seeded 80/20 split of `n` rows.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * TRAIN_FRACTION).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Tensor, rows: &[usize]) -> Self {
        let d = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for &i in rows {
            for (j, v) in x.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    fn apply(&self, x: &Tensor, rows: &[usize]) -> Tensor {
        let d = x.cols();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            out.extend(x.row(i).iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.scale[j]));
        }
        Tensor::matrix(rows.len(), d, out)
    }
}

fn probe_block(spec: &ProbeSpec, input: usize, output: usize) -> Result<Block> {
    let net = match spec.kind {
        ProbeKind::Linear => NetworkSpec::mlp(vec![input, output], ActivationKind::Linear),
        ProbeKind::Mlp {
            hidden_width,
            activation,
        } => NetworkSpec::mlp(vec![input, hidden_width, output], activation),
    };
    Block::new(net, InitScheme::glorot(spec.split_seed.wrapping_add(1)))
}

fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.set(i, l, 1.0);
    }
    t
}

/// Fits a probe on 80% of the rows and scores it on the rest. The inputs
/// are standardized with training-split statistics and never modified.
pub fn fit_probe(spec: &ProbeSpec, reps: &Tensor, targets: Targets<'_>) -> Result<ProbeFit> {
    spec.validate()?;
    let (n, d) = reps.dims2();
    if targets.len() != n {
        return Err(Error::ShapeMismatch {
            op: "probe targets",
            left: vec![n],
            right: vec![targets.len()],
        });
    }
    if n < 5 {
        return Err(Error::invalid("probing needs at least 5 rows"));
    }
    if !reps.is_finite() {
        return Err(Error::NonFinite("probe representations".into()));
    }
    let (train, test) = split_indices(n, spec.split_seed);
    let std_x = Standardizer::fit(reps, &train);
    let (x_train, x_test) = (std_x.apply(reps, &train), std_x.apply(reps, &test));

    // Targets as a dense matrix: one-hot labels or standardized values.
    let (classes, y_all) = match targets {
        Targets::Labels(labels) => {
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            if labels.iter().all(|&l| l == labels[0]) {
                return Err(Error::Degenerate("classification targets have a single class".into()));
            }
            (Some(classes), one_hot(labels, classes))
        }
        Targets::Values(values) => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("probe targets".into()));
            }
            let col = Tensor::matrix(n, 1, values.to_vec());
            let s = Standardizer::fit(&col, &train);
            (None, s.apply(&col, &(0..n).collect::<Vec<_>>()))
        }
    };
    let out_dim = classes.unwrap_or(1);
    let gather = |rows: &[usize]| {
        let data: Vec<f64> = rows.iter().flat_map(|&i| y_all.row(i).to_vec()).collect();
        Tensor::matrix(rows.len(), out_dim, data)
    };
    let y_train = gather(&train);
    let y_test = gather(&test);

    let mut probe = probe_block(spec, d, out_dim)?;
    let names: Vec<String> = probe.params.names().map(str::to_string).collect();
    let mut state = OptimizerState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.split_seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(spec.batch_size) {
            let xb = gather_rows(&x_train, chunk);
            let yb = gather_rows(&y_train, chunk);
            let mut tape = Tape::new();
            let leaves: Vec<_> = probe.params.tensors().map(|t| tape.leaf(t.clone())).collect();
            let x = tape.constant(xb);
            let y = tape.constant(yb);
            let out = probe.net.record(&mut tape, &leaves, x)?;
            let loss = if classes.is_some() {
                let lse = tape.log_sum_exp_rows(out)?;
                let picked = tape.mul(out, y)?;
                let picked = tape.sum_cols(picked);
                let nll = tape.sub(lse, picked)?;
                tape.mean_all(nll)
            } else {
                let diff = tape.sub(out, y)?;
                let sq = tape.square(diff);
                tape.mean_all(sq)
            };
            let grads = tape.grad(loss, &leaves)?;
            let g: Vec<Tensor> = grads.iter().map(|&v| tape.value(v).clone()).collect();
            let mut p: Vec<Tensor> = probe.params.tensors().cloned().collect();
            if optimizer_step(&mut p, &g, &spec.optimizer, &mut state)? {
                for (name, t) in names.iter().zip(p) {
                    probe.params.set(name, t)?;
                }
            }
        }
    }
    let pred = probe.forward(&x_test)?;
    let score = match classes {
        Some(_) => accuracy(&pred, &y_test),
        None => r_squared(pred.data(), y_test.data()),
    };
    Ok(ProbeFit {
        score,
        train_indices: train,
        test_indices: test,
        probe,
    })
}

fn gather_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    let c = x.cols();
    let data: Vec<f64> = rows.iter().flat_map(|&i| x.row(i).to_vec()).collect();
    Tensor::matrix(rows.len(), c, data)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn accuracy(logits: &Tensor, one_hot: &Tensor) -> f64 {
    let n = logits.rows();
    let hits = (0..n).filter(|&i| argmax(logits.row(i)) == argmax(one_hot.row(i))).count();
    hits as f64 / n as f64
}

/// 1 − SSE/SST against the held-out mean. A constant target gives 0 for a
/// perfect fit and −∞ otherwise.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        return if sse == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    1.0 - sse / sst
}
