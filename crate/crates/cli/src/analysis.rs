//! Measurements taken on a trained (or freshly initialized) pipeline.

use headlab_core::autodiff::jacobian;
use headlab_core::data::{aug_tangent_basis, generate_clusters, orbit_sweep, AugmentationSpec, Dataset, DatasetSpec, Orbit, Stage};
use headlab_core::geometry::{
    effective_hessian_parts, lift_representation_direction, parameter_hessian_operator, rayleigh_quotient,
};
use headlab_core::linalg::sym_eig;
use headlab_core::losses::LossKind;
use headlab_core::metrics::{
    alignment_gain, class_orbit_distances, effective_rank, local_curvature, orbit_spread, sensitivity_ranks,
    singularity_residual, OrbitReport,
};
use headlab_core::models::{default_predictor_spec, pseudo_collapse_init, Block, InitScheme, NetworkSpec, Pipeline};
use headlab_core::objective::ThroughPredictor;
use headlab_core::probes::{fit_probe, nonlinearity_gap, ProbeKind, ProbeSpec, ProbeTask, Targets};
use headlab_core::spectral::{extremal_eigenpairs, DEFAULT_POWER_ITERS};
use headlab_core::{ActivationKind, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::settings::Analysis;

#[derive(Clone, Debug, Serialize)]
pub struct AnchorGeometry {
    pub anchor: usize,
    pub label: usize,
    /// Mean pullback form over the augmentation directions.
    pub mean_aug: f64,
    /// Mean pullback form over random unit directions.
    pub random_baseline: f64,
    pub rank_z: usize,
    pub rank_h: usize,
    pub m: usize,
    pub hierarchy_slack: i64,
    /// σmax(S_h) / (‖J_h‖₂·σmax(S_z)).
    pub relative_sensitivity: f64,
}

impl AnchorGeometry {
    pub const CSV_HEADER: [&'static str; 10] = [
        "anchor",
        "label",
        "mean_aug",
        "random_baseline",
        "ratio",
        "rank_z",
        "rank_h",
        "m",
        "hierarchy_slack",
        "relative_sensitivity",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.anchor.to_string(),
            self.label.to_string(),
            format!("{:e}", self.mean_aug),
            format!("{:e}", self.random_baseline),
            format!("{:e}", self.mean_aug / self.random_baseline),
            self.rank_z.to_string(),
            self.rank_h.to_string(),
            self.m.to_string(),
            self.hierarchy_slack.to_string(),
            format!("{:e}", self.relative_sensitivity),
        ]
    }
}

fn row(x: &[f64]) -> Tensor {
    Tensor::matrix(1, x.len(), x.to_vec())
}

/// Pullback-metric singularity and sensitivity ranks at each anchor.
pub fn anchor_geometry(
    p: &Pipeline,
    data: &Dataset,
    aug: &AugmentationSpec,
    anchors: &[usize],
    rank_threshold: f64,
) -> Result<Vec<AnchorGeometry>> {
    anchors
        .iter()
        .map(|&i| {
            let x = data.sample(i);
            let xt = row(x);
            let z = p.backbone.forward(&xt)?;
            let s_z = jacobian(&p.backbone, &xt)?.matmul(&aug_tangent_basis(x, aug)?)?;
            let sing = singularity_residual(&p.head, z.data(), &s_z, i as u64)?;
            let sens = sensitivity_ranks(&p.backbone, &p.head, x, aug, rank_threshold)?;
            let zmax = sens.singular_z.first().copied().unwrap_or(0.0);
            let hmax = sens.singular_h.first().copied().unwrap_or(0.0);
            Ok(AnchorGeometry {
                anchor: i,
                label: data.labels[i],
                mean_aug: sing.mean_aug,
                random_baseline: sing.random_baseline,
                rank_z: sens.rank_z,
                rank_h: sens.rank_h,
                m: sens.m,
                hierarchy_slack: sens.hierarchy_slack,
                relative_sensitivity: hmax / (sens.head_gain * zmax),
            })
        })
        .collect()
}

/// Pooled ratio Σ mean_aug / Σ random_baseline.
pub fn singularity_ratio(rows: &[AnchorGeometry]) -> f64 {
    let aug: f64 = rows.iter().map(|r| r.mean_aug).sum();
    let base: f64 = rows.iter().map(|r| r.random_baseline).sum();
    aug / base
}

/// Fraction of anchors where rank(S_h) ≤ rank(S_z) − m.
pub fn hierarchy_fraction(rows: &[AnchorGeometry]) -> f64 {
    rows.iter().filter(|r| r.hierarchy_slack >= 0).count() as f64 / rows.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub stage: Stage,
    pub probe: &'static str,
    pub task: String,
    pub score: f64,
    /// MLP minus linear score for this stage and task.
    pub gap: f64,
}

impl ProbeRow {
    pub const CSV_HEADER: [&'static str; 5] = ["stage", "probe", "task", "score", "gap"];

    pub fn csv_record(&self) -> Vec<String> {
        let stage = match self.stage {
            Stage::Input => "input",
            Stage::Backbone => "backbone",
            Stage::Head => "head",
        };
        vec![
            stage.to_string(),
            self.probe.to_string(),
            self.task.clone(),
            format!("{:e}", self.score),
            format!("{:e}", self.gap),
        ]
    }
}

/// Rows are `views` independently augmented copies of every sample.
pub fn probe_inputs(data: &Dataset, aug: &AugmentationSpec, views: usize, seed: u64) -> Result<(Tensor, Vec<f64>, Vec<usize>)> {
    let idx: Vec<usize> = (0..data.len() * views).map(|i| i % data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (x, xi) = aug.augment_batch(&data.rows(&idx), &mut rng)?;
    let angles = xi.iter().map(|v| v[0]).collect();
    let labels = idx.iter().map(|&i| data.labels[i]).collect();
    Ok((x, angles, labels))
}

/// Linear and MLP probes for the first augmentation parameter (R²) and
/// the class label (accuracy) on backbone and head outputs.
pub fn probe_table(p: &Pipeline, data: &Dataset, aug: &AugmentationSpec, analysis: &Analysis, seed: u64) -> Result<Vec<ProbeRow>> {
    let (x, angles, labels) = probe_inputs(data, aug, analysis.probe_views, seed)?;
    let z = p.backbone.forward(&x)?;
    let h = p.head.forward(&z)?;
    let mlp = ProbeKind::Mlp {
        hidden_width: analysis.probe_hidden,
        activation: ActivationKind::ReLU,
    };
    let tasks = [ProbeTask::RegressXi { generator: 0 }, ProbeTask::ClassifyLabel];
    let mut rows = Vec::with_capacity(8);
    for (stage, reps) in [(Stage::Backbone, &z), (Stage::Head, &h)] {
        for task in tasks {
            let targets = match task {
                ProbeTask::ClassifyLabel => Targets::Labels(&labels),
                ProbeTask::RegressXi { .. } => Targets::Values(&angles),
            };
            let score = |kind| -> Result<f64> {
                let mut spec = ProbeSpec::new(kind, task, seed);
                spec.epochs = analysis.probe_epochs;
                Ok(fit_probe(&spec, reps, targets)?.score)
            };
            let lin = score(ProbeKind::Linear)?;
            let deep = score(mlp)?;
            let gap = nonlinearity_gap(lin, deep);
            for (kind, s) in [(ProbeKind::Linear, lin), (mlp, deep)] {
                rows.push(ProbeRow {
                    stage,
                    probe: kind.name(),
                    task: task.name(),
                    score: s,
                    gap,
                });
            }
        }
    }
    Ok(rows)
}

pub fn find_probe<'a>(rows: &'a [ProbeRow], stage: Stage, probe: &str, task: &str) -> Option<&'a ProbeRow> {
    rows.iter().find(|r| r.stage == stage && r.probe == probe && r.task == task)
}

/// Backbone beats head on the augmentation parameter (linear probe), and
/// the head's class-label nonlinearity gap is at least the backbone's.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GuillotineCheck {
    pub backbone_xi: f64,
    pub head_xi: f64,
    pub backbone_gap: f64,
    pub head_gap: f64,
}

impl GuillotineCheck {
    pub fn from_rows(rows: &[ProbeRow]) -> Option<Self> {
        let xi = ProbeTask::RegressXi { generator: 0 }.name();
        let label = ProbeTask::ClassifyLabel.name();
        Some(GuillotineCheck {
            backbone_xi: find_probe(rows, Stage::Backbone, "linear", &xi)?.score,
            head_xi: find_probe(rows, Stage::Head, "linear", &xi)?.score,
            backbone_gap: find_probe(rows, Stage::Backbone, "linear", &label)?.gap,
            head_gap: find_probe(rows, Stage::Head, "linear", &label)?.gap,
        })
    }

    pub fn holds(&self) -> bool {
        self.backbone_xi > self.head_xi && self.head_gap >= self.backbone_gap
    }
}

/// Orbits of every anchor at one stage, with class labels.
pub struct StageOrbits {
    pub stage: Stage,
    pub orbits: Vec<Orbit>,
    pub labels: Vec<usize>,
}

pub fn stage_orbits(p: &Pipeline, data: &Dataset, aug: &AugmentationSpec, anchors: &[usize], grid: &[f64], stage: Stage) -> Result<StageOrbits> {
    let orbits = anchors
        .iter()
        .map(|&i| orbit_sweep(data.sample(i), aug, 0, grid, stage, Some(p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StageOrbits {
        stage,
        orbits,
        labels: anchors.iter().map(|&i| data.labels[i]).collect(),
    })
}

fn mean(xs: impl Iterator<Item = Result<f64>>) -> Result<f64> {
    let v = xs.collect::<Result<Vec<f64>>>()?;
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// Orbit metrics of one stage. `gain` is the head-versus-backbone
/// alignment gain, shared by both stages.
pub fn orbit_report(so: &StageOrbits, gain: f64) -> Result<OrbitReport> {
    let curvature = mean(so.orbits.iter().map(|o| local_curvature(&o.points)))?;
    let spread = mean(so.orbits.iter().map(|o| orbit_spread(&o.points)))?;
    let classes = so.labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut grouped: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::new(); classes];
    for (o, &l) in so.orbits.iter().zip(&so.labels) {
        grouped[l].push(o.points.clone());
    }
    grouped.retain(|g| !g.is_empty());
    let dist = class_orbit_distances(&grouped)?;
    let all: Vec<Vec<f64>> = so.orbits.iter().flat_map(|o| o.points.iter().cloned()).collect();
    let rank = effective_rank(&all)?;
    Ok(OrbitReport {
        curvature,
        spread,
        d_intra: dist.d_intra,
        d_inter: dist.d_inter,
        class_orbit_ratio: dist.ratio,
        effective_rank: rank.value,
        alignment_gain: gain,
    })
}

/// Mean over anchors of head alignment minus backbone alignment, each the
/// mean cosine between the unaugmented representation and its orbit.
pub fn orbit_alignment_gain(p: &Pipeline, data: &Dataset, backbone: &StageOrbits, head: &StageOrbits, anchors: &[usize]) -> Result<f64> {
    mean(anchors.iter().enumerate().map(|(k, &i)| {
        let x = row(data.sample(i));
        let z = p.backbone.forward(&x)?;
        let h = p.head.forward(&z)?;
        alignment_gain(z.data(), &backbone.orbits[k].points, h.data(), &head.orbits[k].points)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InstabilityCase {
    /// λmin of the dense effective Hessian in representation space.
    pub representation_min: f64,
    /// min(power-iteration λmin, Rayleigh quotient of the lifted direction).
    pub parameter_min: f64,
    pub power_min: f64,
    pub lift_rayleigh: f64,
}

/// One randomized instance: pseudo-collapsed smooth head (d = 32, width
/// 64, k = 16, α = 0.1) behind a linear backbone, SimSiam objective
/// through a predictor, at two rotated views of one sample.
pub fn instability_case(activation: ActivationKind, seed: u64) -> Result<InstabilityCase> {
    let (d, width, k) = (32, 64, 16);
    let head_spec = NetworkSpec::mlp(vec![d, width, k], activation);
    let mut head = Block::new(head_spec.clone(), InitScheme::glorot(3 * seed + 1))?;
    head.params = pseudo_collapse_init(&head.params, 0.1)?;
    let p = Pipeline {
        backbone: Block::new(NetworkSpec::mlp(vec![d, d], ActivationKind::Linear), InitScheme::glorot(3 * seed))?,
        head,
        predictor: Some(Block::new(default_predictor_spec(&head_spec), InitScheme::glorot(3 * seed + 2))?),
    };
    let data = generate_clusters(&DatasetSpec {
        num_classes: 4,
        ambient_dim: d,
        cluster_spread: 1.0,
        samples_per_class: 4,
        seed,
        nuisance_amplitude: 1.0,
    })?;
    let aug = AugmentationSpec::plane_rotation(std::f64::consts::FRAC_PI_4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = data.rows(&[0]);
    let (x1, _) = aug.augment_batch(&x, &mut rng)?;
    let (x2, _) = aug.augment_batch(&x, &mut rng)?;
    let z = p.backbone.forward(&x1)?;
    let partner = p.head.forward(&p.backbone.forward(&x2)?)?;
    let loss = LossKind::SimSiamCosine;
    let predictor = p.predictor.as_ref().expect("built with a predictor");
    let through = ThroughPredictor { predictor, loss: &loss };
    let parts = effective_hessian_parts(&p.head, &through, &z, &partner)?;
    let eig = sym_eig(&parts.h_eff()?)?;
    let last = eig.values.len() - 1;
    let representation_min = eig.values[last];
    let mut op = parameter_hessian_operator(&p, &loss, [&x1, &x2], false)?;
    let (est, _) = extremal_eigenpairs(&mut op, DEFAULT_POWER_ITERS, seed)?;
    let dir = lift_representation_direction(&p, x1.row(0), &eig.vector(last))?;
    let lift_rayleigh = rayleigh_quotient(&mut op, &dir)?;
    Ok(InstabilityCase {
        representation_min,
        parameter_min: est.lambda_min.min(lift_rayleigh),
        power_min: est.lambda_min,
        lift_rayleigh,
    })
}
