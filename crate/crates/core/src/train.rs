//! Optimizers, the two-view training loop and its per-step diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{AugmentationSpec, Dataset};
use crate::error::{Error, Result};
use crate::geometry::effective_hessian_operator;
use crate::losses::{LossKind, PairLoss};
use crate::metrics::{batch_statistics, effective_rank_of};
use crate::models::{pseudo_collapse_init, Block, InitScheme, NetworkSpec, Pipeline};
use crate::objective::{assign_pipeline_tensors, pipeline_tensors, record_objective, PipelineVars, ThroughPredictor};
use crate::spectral::{extremal_eigenvalues, DEFAULT_POWER_ITERS};
use crate::tensor::{norm, Tensor};
use crate::linalg::center_rows;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd { momentum },
            learning_rate,
            weight_decay: 0.0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            learning_rate,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// A zero learning rate is accepted so that a run can be held fixed.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be ≥ 0, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be ≥ 0"));
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::invalid(format!("momentum must lie in [0, 1), got {momentum}")))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(Error::invalid("Adam needs β₁, β₂ ∈ [0, 1) and ε > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Momentum buffers (SGD) or moment estimates (Adam), lazily shaped.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl OptimizerState {
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Applies one update in place. Weight decay is decoupled: `w ← w − ηλw`
/// before the gradient step. Returns `false` (and leaves everything
/// untouched) when a gradient entry is not finite.
pub fn optimizer_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    config: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<bool> {
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Ok(false);
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        state.second = state.first.clone();
    }
    state.steps += 1;
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.weight_decay;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let pd = p.data_mut();
        if config.weight_decay != 0.0 {
            pd.iter_mut().for_each(|w| *w *= decay);
        }
        match config.kind {
            OptimizerKind::Sgd { momentum } => {
                let buf = state.first[i].data_mut();
                for ((w, b), &gi) in pd.iter_mut().zip(buf.iter_mut()).zip(g.data()) {
                    *b = momentum * *b + gi;
                    *w -= lr * *b;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = state.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (m, v) = (state.first[i].data_mut(), state.second[i].data_mut());
                for (((w, mi), vi), &gi) in pd.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadInit {
    Standard,
    PseudoCollapse { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub loss: LossKind,
    pub backbone: NetworkSpec,
    pub head: NetworkSpec,
    /// Online-branch predictor; the partner branch is held constant.
    pub predictor: Option<NetworkSpec>,
    /// Average the predictor objective with its swapped term.
    pub symmetric: bool,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init: HeadInit,
    pub track_spectra: bool,
    pub spectra_batches: usize,
    pub spectra_iters: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.backbone.validate()?;
        self.head.validate()?;
        self.optimizer.validate()?;
        if self.backbone.output_dim() != self.head.input_dim() {
            return Err(Error::invalid("head input width must equal backbone output width"));
        }
        if let Some(p) = &self.predictor {
            p.validate()?;
            if p.input_dim() != self.head.output_dim() || p.output_dim() != self.head.output_dim() {
                return Err(Error::invalid("predictor must map the head output space to itself"));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if let HeadInit::PseudoCollapse { alpha } = self.init {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::invalid("pseudo-collapse factor must lie in (0, 1]"));
            }
        }
        if self.track_spectra {
            if self.head.use_batch_norm || self.predictor.as_ref().is_some_and(|p| p.use_batch_norm) {
                return Err(Error::SecondOrderThroughBatchNorm);
            }
            if self.spectra_iters == 0 {
                return Err(Error::invalid("spectral tracking needs at least one iteration"));
            }
        }
        Ok(())
    }

    /// Builds the pipeline with seeds derived from the run seed.
    pub fn build_pipeline(&self) -> Result<Pipeline> {
        let backbone = Block::new(self.backbone.clone(), InitScheme::glorot(self.seed.wrapping_mul(3)))?;
        let mut head = Block::new(self.head.clone(), InitScheme::glorot(self.seed.wrapping_mul(3) + 1))?;
        if let HeadInit::PseudoCollapse { alpha } = self.init {
            head.params = pseudo_collapse_init(&head.params, alpha)?;
        }
        let predictor = self
            .predictor
            .clone()
            .map(|s| Block::new(s, InitScheme::glorot(self.seed.wrapping_mul(3) + 2)))
            .transpose()?;
        Ok(Pipeline {
            backbone,
            head,
            predictor,
        })
    }
}

/// Relative update sizes of the two parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdaptationDiagnostics {
    pub head_ratio: f64,
    pub backbone_ratio: f64,
    /// head_ratio / backbone_ratio; infinite when the backbone does not move.
    pub timescale_ratio: f64,
    /// ‖∇_h L‖₂ over the current batch.
    pub residual_norm: f64,
}

fn group_norm<'a>(ts: impl Iterator<Item = &'a Tensor>) -> f64 {
    ts.map(|t| t.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

fn relative_update(params: &[Tensor], grads: &[Tensor], lr: f64) -> f64 {
    let w = group_norm(params.iter());
    let g = group_norm(grads.iter());
    if w == 0.0 {
        f64::INFINITY
    } else {
        lr * g / w
    }
}

/// `η‖∇w‖/‖w‖` for the first `head_start` tensors (backbone) and the rest
/// (head and predictor).
pub fn adaptation_diagnostics(
    params: &[Tensor],
    grads: &[Tensor],
    lr: f64,
    head_start: usize,
    head_output_grads: &[&Tensor],
) -> Result<AdaptationDiagnostics> {
    if params.len() != grads.len() || head_start > params.len() {
        return Err(Error::invalid("partition does not cover the parameters"));
    }
    let backbone_ratio = relative_update(&params[..head_start], &grads[..head_start], lr);
    let head_ratio = relative_update(&params[head_start..], &grads[head_start..], lr);
    let timescale_ratio = if backbone_ratio == 0.0 || !backbone_ratio.is_finite() {
        f64::INFINITY
    } else {
        head_ratio / backbone_ratio
    };
    Ok(AdaptationDiagnostics {
        head_ratio,
        backbone_ratio,
        timescale_ratio,
        residual_norm: group_norm(head_output_grads.iter().copied()),
    })
}

/// One optimizer step. Non-finite entries serialize as `null` and are
/// named in `flags`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub epoch: usize,
    pub loss_value: f64,
    pub representation_variance: f64,
    pub condition_number: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub residual_norm: f64,
    pub head_update_ratio: f64,
    pub backbone_update_ratio: f64,
    pub timescale_ratio: f64,
    pub skipped: bool,
    pub flags: Vec<String>,
}

impl MetricsRow {
    fn flag_non_finite(&mut self) {
        let fields = [
            ("loss_value", self.loss_value),
            ("representation_variance", self.representation_variance),
            ("condition_number", self.condition_number),
            ("lambda_min", self.lambda_min.unwrap_or(0.0)),
            ("lambda_max", self.lambda_max.unwrap_or(0.0)),
            ("residual_norm", self.residual_norm),
            ("head_update_ratio", self.head_update_ratio),
            ("backbone_update_ratio", self.backbone_update_ratio),
            ("timescale_ratio", self.timescale_ratio),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                self.flags.push(format!("{name}_non_finite"));
            }
        }
    }
}

/// Evaluation of the whole dataset (no augmentation) after an epoch;
/// epoch 0 is the state before training.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Head-output variance, rows normalized.
    pub variance: f64,
    pub condition_number: f64,
    pub backbone_effective_rank: f64,
    pub mean_lambda_min: Option<f64>,
    pub mean_lambda_max: Option<f64>,
    pub mean_timescale_ratio: f64,
}

impl EpochSummary {
    pub const CSV_HEADER: [&'static str; 8] = [
        "epoch",
        "mean_loss",
        "variance",
        "condition_number",
        "backbone_effective_rank",
        "mean_lambda_min",
        "mean_lambda_max",
        "mean_timescale_ratio",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        vec![
            self.epoch.to_string(),
            format!("{:e}", self.mean_loss),
            format!("{:e}", self.variance),
            format!("{:e}", self.condition_number),
            format!("{:e}", self.backbone_effective_rank),
            opt(self.mean_lambda_min),
            opt(self.mean_lambda_max),
            format!("{:e}", self.mean_timescale_ratio),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub epochs: Vec<EpochSummary>,
    pub pipeline: Pipeline,
}

impl RunOutput {
    /// Last-epoch over epoch-0 head variance.
    pub fn variance_ratio(&self) -> f64 {
        let first = self.epochs.first().map_or(f64::NAN, |e| e.variance);
        let last = self.epochs.last().map_or(f64::NAN, |e| e.variance);
        last / first
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Serialization(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn evaluate(pipeline: &Pipeline, data: &Dataset) -> Result<(f64, f64, f64)> {
    let z = pipeline.backbone.forward(&data.points)?;
    let h = pipeline.head.forward(&z)?;
    let (variance, kappa) = match batch_statistics(&h, false) {
        Ok(s) => (s.variance, s.condition_number),
        Err(Error::Degenerate(_)) => (0.0, f64::INFINITY),
        Err(e) => return Err(e),
    };
    let rank = effective_rank_of(&center_rows(&z))?.value;
    Ok((variance, kappa, rank))
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn track_spectrum(
    pipeline: &Pipeline,
    loss: &LossKind,
    z: &Tensor,
    partner: &Tensor,
    iters: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let est = match &pipeline.predictor {
        None => {
            let mut op = effective_hessian_operator(&pipeline.head, loss, z, partner)?;
            extremal_eigenvalues(&mut op, iters, seed)?
        }
        Some(pred) => {
            let through = ThroughPredictor { predictor: pred, loss };
            let mut op = effective_hessian_operator(&pipeline.head, &through as &dyn PairLoss, z, partner)?;
            extremal_eigenvalues(&mut op, iters, seed)?
        }
    };
    Ok((est.lambda_min, est.lambda_max))
}

/// Trains backbone, head and predictor jointly on two augmented views of
/// each batch. Spectra of the effective Hessian at the first view's
/// representations are tracked on the first `spectra_batches` batches of
/// every epoch.
pub fn train_run(config: &RunConfig, data: &Dataset, aug: &AugmentationSpec) -> Result<RunOutput> {
    config.validate()?;
    aug.validate(data.dim())?;
    if data.dim() != config.backbone.input_dim() {
        return Err(Error::invalid("backbone input width must equal data dimension"));
    }
    let mut pipeline = config.build_pipeline()?;
    let head_start = pipeline.backbone.params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::default();
    let mut rows = Vec::new();
    let (v0, k0, r0) = evaluate(&pipeline, data)?;
    let mut epochs = vec![EpochSummary {
        epoch: 0,
        mean_loss: f64::NAN,
        variance: v0,
        condition_number: k0,
        backbone_effective_rank: r0,
        mean_lambda_min: None,
        mean_lambda_max: None,
        mean_timescale_ratio: f64::NAN,
    }];
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let (mut losses, mut lmins, mut lmaxs, mut ratios) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (b, idx) in data.batches(config.batch_size, &mut rng).into_iter().enumerate() {
            let x = data.rows(&idx);
            let (v1, _) = aug.augment_batch(&x, &mut rng)?;
            let (v2, _) = aug.augment_batch(&x, &mut rng)?;
            let mut tape = Tape::new();
            let vars = PipelineVars::leaves(&mut tape, &pipeline);
            let a = tape.constant(v1);
            let c = tape.constant(v2);
            let obj = record_objective(&mut tape, &pipeline, &vars, [a, c], &config.loss, config.symmetric)?;
            let loss_value = tape.scalar(obj.loss)?;
            let mut wrt = vars.all();
            wrt.extend(obj.head);
            let grads = tape.grad(obj.loss, &wrt)?;
            let n = grads.len() - 2;
            let grad_t: Vec<Tensor> = grads[..n].iter().map(|&g| tape.value(g).clone()).collect();
            let hg = [tape.value(grads[n]), tape.value(grads[n + 1])];
            let mut params = pipeline_tensors(&pipeline);
            let diag = adaptation_diagnostics(&params, &grad_t, config.optimizer.learning_rate, head_start, &hg)?;
            let h1 = tape.value(obj.head[0]);
            let (variance, kappa) = match batch_statistics(h1, false) {
                Ok(s) => (s.variance, s.condition_number),
                Err(Error::Degenerate(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let mut lam = (None, None);
            if config.track_spectra && b < config.spectra_batches {
                let z = tape.value(obj.backbone[0]).clone();
                let partner = tape.value(obj.head[1]).clone();
                let (lo, hi) = track_spectrum(&pipeline, &config.loss, &z, &partner, config.spectra_iters, config.seed ^ step as u64)?;
                lmins.push(lo);
                lmaxs.push(hi);
                lam = (Some(lo), Some(hi));
            }
            let applied = optimizer_step(&mut params, &grad_t, &config.optimizer, &mut state)?;
            if applied {
                assign_pipeline_tensors(&mut pipeline, &params)?;
            }
            let mut row = MetricsRow {
                step,
                epoch,
                loss_value,
                representation_variance: variance,
                condition_number: kappa,
                lambda_min: lam.0,
                lambda_max: lam.1,
                residual_norm: diag.residual_norm,
                head_update_ratio: diag.head_ratio,
                backbone_update_ratio: diag.backbone_ratio,
                timescale_ratio: diag.timescale_ratio,
                skipped: !applied,
                flags: Vec::new(),
            };
            if !applied {
                row.flags.push("non_finite_gradient".into());
            }
            row.flag_non_finite();
            losses.push(loss_value);
            if diag.timescale_ratio.is_finite() {
                ratios.push(diag.timescale_ratio);
            }
            rows.push(row);
            step += 1;
        }
        let (variance, kappa, rank) = evaluate(&pipeline, data)?;
        epochs.push(EpochSummary {
            epoch,
            mean_loss: mean_of(&losses).unwrap_or(f64::NAN),
            variance,
            condition_number: kappa,
            backbone_effective_rank: rank,
            mean_lambda_min: mean_of(&lmins),
            mean_lambda_max: mean_of(&lmaxs),
            mean_timescale_ratio: mean_of(&ratios).unwrap_or(f64::INFINITY),
        });
    }
    Ok(RunOutput { rows, epochs, pipeline })
}

/// Default spectral-tracking iteration count.
pub const TRACK_ITERS: usize = DEFAULT_POWER_ITERS;

/// ‖a − b‖ over two equally shaped tensor lists.
pub fn parameter_distance(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
            norm(&d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_step() {
        let mut p = vec![Tensor::vector(vec![1.0, 2.0])];
        let g = vec![Tensor::vector(vec![0.5, -1.0])];
        let mut s = OptimizerState::default();
        assert!(optimizer_step(&mut p, &g, &OptimizerConfig::sgd(1.0, 0.0), &mut s).unwrap());
        assert_eq!(p[0].data(), &[0.5, 3.0]);
    }

    #[test]
    fn zero_gradient_no_decay_is_a_fixed_point() {
        let mut p = vec![Tensor::vector(vec![1.0, -2.0])];
        let g = vec![Tensor::zeros(&[2])];
        let mut s = OptimizerState::default();
        for cfg in [OptimizerConfig::sgd(0.1, 0.9), OptimizerConfig::adam(0.1)] {
            optimizer_step(&mut p, &g, &cfg, &mut s).unwrap();
            assert_eq!(p[0].data(), &[1.0, -2.0]);
        }
    }

    #[test]
    fn adam_three_steps_on_quadratic() {
        // f(w) = w², w₀ = 1, lr 0.1; hand trace of the bias-corrected moments.
        let cfg = OptimizerConfig::adam(0.1);
        let mut s = OptimizerState::default();
        let mut p = vec![Tensor::vector(vec![1.0])];
        let mut w = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            let grad = vec![Tensor::vector(vec![2.0 * p[0].data()[0]])];
            optimizer_step(&mut p, &grad, &cfg, &mut s).unwrap();
        }
        assert!((p[0].data()[0] - w).abs() < 1e-15);
        // the first step moves by lr·sign(g) up to ε
        assert!((w - 0.7).abs() < 0.05);
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut p = vec![Tensor::vector(vec![1.0])];
        let g = vec![Tensor::vector(vec![f64::NAN])];
        let mut s = OptimizerState::default();
        assert!(!optimizer_step(&mut p, &g, &OptimizerConfig::sgd(0.1, 0.0), &mut s).unwrap());
        assert_eq!(p[0].data(), &[1.0]);
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut p = vec![Tensor::vector(vec![2.0])];
        let g = vec![Tensor::vector(vec![0.0])];
        let mut s = OptimizerState::default();
        let cfg = OptimizerConfig::sgd(0.5, 0.0).with_weight_decay(0.1);
        optimizer_step(&mut p, &g, &cfg, &mut s).unwrap();
        assert_eq!(p[0].data(), &[2.0 * (1.0 - 0.05)]);
    }

    #[test]
    fn invalid_optimizers() {
        assert!(OptimizerConfig::sgd(0.1, 1.0).validate().is_err());
        assert!(OptimizerConfig::sgd(-0.1, 0.0).validate().is_err());
        assert!(OptimizerConfig::adam(0.1).validate().is_ok());
    }

    #[test]
    fn timescale_examples() {
        let p = vec![Tensor::vector(vec![3.0, 4.0]), Tensor::vector(vec![6.0, 8.0])];
        let g = vec![Tensor::vector(vec![0.3, 0.4]), Tensor::vector(vec![0.6, 0.8])];
        let d = adaptation_diagnostics(&p, &g, 0.1, 1, &[]).unwrap();
        assert!((d.timescale_ratio - 1.0).abs() < 1e-15);
        let frozen = vec![Tensor::vector(vec![0.0, 0.0]), g[1].clone()];
        let d = adaptation_diagnostics(&p, &frozen, 0.1, 1, &[]).unwrap();
        assert!(d.timescale_ratio.is_infinite());
        let zero = vec![Tensor::zeros(&[2]), p[1].clone()];
        assert!(adaptation_diagnostics(&zero, &g, 0.1, 1, &[]).unwrap().backbone_ratio.is_infinite());
    }
}
