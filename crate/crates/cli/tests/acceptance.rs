//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run at full tolerance and
//! reported as FAIL; only an unlisted failure makes the binary exit nonzero.

use std::collections::BTreeMap;
use std::error::Error;
use std::fs;
use std::path::Path;
use std::time::Instant;

use headlab::analysis::{hierarchy_fraction, instability_case, probe_table, singularity_ratio, GuillotineCheck};
use headlab::output::body_of;
use headlab::scenarios::{cells, run_scenario, singularity_study, train_checkpoint, variance_kappa_spearman, SingularityOutcome};
use headlab::trials::{perturbation_trials, whitening_trials};
use headlab::{ScenarioConfig, ScenarioKind, Settings};
use headlab_core::autodiff::{gradient, hvp, jacobian};
use headlab_core::geometry::{effective_hessian_dense, effective_hessian_operator, effective_hessian_parts};
use headlab_core::linalg::eigenvalues;
use headlab_core::losses::{LossKind, PairLoss};
use headlab_core::metrics::{
    alignment_gain, batch_statistics, class_orbit_distances, effective_rank, local_curvature, orbit_spread, spearman,
};
use headlab_core::models::{Block, InitScheme, NetworkSpec};
use headlab_core::spectral::{extremal_eigenvalues, DEFAULT_POWER_ITERS};
use headlab_core::train::EpochSummary;
use headlab_core::{ActivationKind, DiffMap, Tape, Tensor, Var};
use headlab_oracle::mlp::{mlp_forward, Act, Layer};
use headlab_oracle::{dense_eig, fd_directional_gradient, fd_gradient, fd_jacobian, rel_err, stats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Res<T> = Result<T, Box<dyn Error>>;

const AUTODIFF_CASES: u64 = 100;
const AUTODIFF_REL: f64 = 1e-5;
const AUTODIFF_SECONDS: f64 = 60.0;
const SPECTRAL_CASES: u64 = 50;
const SPECTRAL_MAX_DIM: usize = 128;
const SPECTRAL_LONG: (usize, f64) = (100, 1e-4);
const SPECTRAL_SHORT: (usize, f64) = (DEFAULT_POWER_ITERS, 1e-2);
const WHITENING_TOL: f64 = 1e-10;
const NULLITY_SEEDS: u64 = 20;
const NULLITY_LAMBDA_FLOOR: f64 = -1e-10;
const INSTABILITY_SEEDS: u64 = 50;
const INSTABILITY_NEGATIVE: f64 = -1e-8;
const INSTABILITY_FRACTION: f64 = 0.8;
const LIFT_TRIGGER: f64 = -1e-6;
const LIFT_FRACTION: f64 = 0.95;
const SWISH_ESCAPE: f64 = 5.0;
const RELU_TRAPPED: f64 = 2.0;
const COLLAPSE_SECONDS: f64 = 15.0 * 60.0;
const SINGULARITY_FACTOR: f64 = 10.0;
const PRE_RATIO_BAND: (f64, f64) = (0.2, 5.0);
const RANK_LIMIT: f64 = 4.5;
const PERTURBATION_CASES: usize = 1000;
const WEYL_CASES: usize = 100;
const METRIC_CASES: u64 = 100;
const METRIC_TOL: f64 = 1e-12;
const SPEARMAN_TOL: f64 = 1e-12;
const SEEDS: [u64; 3] = [0, 1, 2];
const MAJORITY: usize = 2;

/// Criteria that fail at desk scale; the analysis is kept with the project notes.
const KNOWN_FAILURES: [u32; 4] = [2, 3, 6, 8];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Res<Self> {
        Ok(Verdict {
            pass,
            detail: detail.into(),
        })
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

fn oracle_act(a: ActivationKind) -> Act {
    match a {
        ActivationKind::Linear => Act::Identity,
        ActivationKind::ReLU => Act::Relu,
        ActivationKind::GELU => Act::Gelu,
        ActivationKind::Swish => Act::Swish,
        ActivationKind::Tanh => Act::Tanh,
        ActivationKind::Softplus => Act::Softplus,
    }
}

fn oracle_layers(b: &Block) -> Vec<Layer> {
    (0..b.net.spec().num_layers())
        .map(|l| {
            let w = b.params.get(&format!("layer{l}.weight")).expect("weight");
            let bias = b.params.get(&format!("layer{l}.bias")).expect("bias");
            Layer {
                weight: w.row_vectors(),
                bias: bias.data().to_vec(),
            }
        })
        .collect()
}

fn oracle_forward(b: &Block, rows: usize, flat: &[f64]) -> Vec<f64> {
    let spec = b.net.spec();
    let layers = oracle_layers(b);
    let act = oracle_act(spec.activations.first().copied().unwrap_or(ActivationKind::Linear));
    let d = spec.input_dim();
    (0..rows)
        .flat_map(|i| mlp_forward(&layers, act, &flat[i * d..(i + 1) * d], spec.output_normalize))
        .collect()
}

const SMOOTH: [ActivationKind; 4] =
    [ActivationKind::Swish, ActivationKind::GELU, ActivationKind::Tanh, ActivationKind::Softplus];

fn random_loss(rng: &mut impl Rng) -> LossKind {
    [
        LossKind::PairMse,
        LossKind::SimSiamCosine,
        LossKind::info_nce(0.1),
        LossKind::vicreg_default(),
        LossKind::barlow_default(),
    ][rng.random_range(0..5)]
}

fn criterion_1() -> Res<Verdict> {
    let start = Instant::now();
    let (mut worst, mut failures) = ([0.0f64; 3], 0);
    for case in 0..AUTODIFF_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let depth = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=6)).collect();
        let act = SMOOTH[rng.random_range(0..SMOOTH.len())];
        let spec = NetworkSpec::mlp(widths, act).normalized(rng.random_bool(0.3));
        let (d, k) = (spec.input_dim(), spec.output_dim());
        let head = Block::new(spec, InitScheme::glorot(case))?;
        let rows = 3;
        let loss = random_loss(&mut rng);
        let x = gaussian(&mut rng, rows, d);
        let partner = gaussian(&mut rng, rows, k);
        let dir = gaussian(&mut rng, rows, d);
        let objective = |t: &mut Tape, v: Var| {
            let h = head.apply(t, v)?;
            let p = t.constant(partner.clone());
            loss.build(t, h, p)
        };
        let value = |flat: &[f64]| {
            let out = Tensor::matrix(rows, k, oracle_forward(&head, rows, flat));
            loss.evaluate(&out, &partner).expect("finite loss")
        };
        let g = gradient(&objective, &x)?;
        let g_fd = fd_gradient(value, x.data(), 1e-6);
        let hv = hvp(&objective, &x, &dir)?;
        let hv_fd = fd_directional_gradient(
            |p| {
                gradient(&objective, &Tensor::matrix(rows, d, p.to_vec()))
                    .expect("gradient")
                    .into_data()
            },
            x.data(),
            dir.data(),
            1e-5,
        );
        let j = jacobian(&head, &x)?;
        let j_fd: Vec<f64> = fd_jacobian(|p| oracle_forward(&head, rows, p), x.data(), 1e-6).concat();
        let errs = [rel_err(g.data(), &g_fd), rel_err(hv.data(), &hv_fd), rel_err(j.data(), &j_fd)];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
        if errs.iter().any(|&e| !(e <= AUTODIFF_REL)) {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        failures == 0 && secs < AUTODIFF_SECONDS,
        format!(
            "{failures}/{AUTODIFF_CASES} cases over {AUTODIFF_REL:.0e}; worst rel err grad {:.1e}, hvp {:.1e}, jacobian {:.1e}; {secs:.1} s",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn spectral_case(case: u64) -> Res<(Tensor, Block, LossKind, Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
    let rows = rng.random_range(3..=4usize);
    let d = rng.random_range(2..=(SPECTRAL_MAX_DIM / rows).min(32));
    let k = rng.random_range(2..=16usize);
    let act = SMOOTH[rng.random_range(0..SMOOTH.len())];
    let loss = random_loss(&mut rng);
    let head = Block::new(NetworkSpec::mlp(vec![d, 32, k], act), InitScheme::glorot(case))?;
    let z = gaussian(&mut rng, rows, d);
    let partner = gaussian(&mut rng, rows, k);
    let dense = effective_hessian_dense(&head, &loss, &z, &partner)?;
    Ok((dense, head, loss, z, partner))
}

/// Random effective Hessians of smooth heads under the five pair losses,
/// flattened over a batch of 3-4 representations.
fn criterion_2() -> Res<Verdict> {
    let mut misses = [0usize; 2];
    let mut worst = [0.0f64; 2];
    for case in 0..SPECTRAL_CASES {
        let (dense, head, loss, z, partner) = spectral_case(case)?;
        let exact = dense_eig(&dense.row_vectors(), 100)?;
        let (hi, lo) = (exact.max(), exact.min());
        let radius = hi.abs().max(lo.abs());
        let rel = |est: f64, truth: f64| (est - truth).abs() / truth.abs().max(1e-12 * radius);
        for (i, (iters, tol)) in [SPECTRAL_LONG, SPECTRAL_SHORT].into_iter().enumerate() {
            let mut op = effective_hessian_operator(&head, &loss, &z, &partner)?;
            let est = extremal_eigenvalues(&mut op, iters, case)?;
            let e = rel(est.lambda_max, hi).max(rel(est.lambda_min, lo));
            worst[i] = worst[i].max(e);
            if !(e <= tol) {
                misses[i] += 1;
            }
        }
    }
    Verdict::new(
        misses == [0, 0],
        format!(
            "{} iters: {}/{SPECTRAL_CASES} over {:.0e} (worst {:.1e}); {} iters: {}/{SPECTRAL_CASES} over {:.0e} (worst {:.1e})",
            SPECTRAL_LONG.0, misses[0], SPECTRAL_LONG.1, worst[0], SPECTRAL_SHORT.0, misses[1], SPECTRAL_SHORT.1, worst[1]
        ),
    )
}

fn criterion_3() -> Res<Verdict> {
    let start = Instant::now();
    let trials = whitening_trials(16, 32, 100, 0)?;
    let worst = trials.iter().max_by(|a, b| a.deviation.total_cmp(&b.deviation)).ok_or("no trials")?;
    let over = trials.iter().filter(|t| t.deviation > WHITENING_TOL).count();
    Verdict::new(
        worst.deviation <= WHITENING_TOL,
        format!(
            "{over}/{} Hessians over {WHITENING_TOL:.0e}; max deviation {:.2e} at condition number {:.2e}; {:.2} s",
            trials.len(),
            worst.deviation,
            worst.condition,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_4() -> Res<Verdict> {
    let (mut max_m, mut min_lambda, mut checked, mut kinks) = (0.0f64, f64::INFINITY, 0, 0);
    for act in [ActivationKind::Linear, ActivationKind::ReLU] {
        for seed in 0..NULLITY_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = Block::new(NetworkSpec::mlp(vec![32, 64, 16], act), InitScheme::glorot(seed))?;
            let z = gaussian(&mut rng, 4, 32);
            let pre = head.net.hidden_pre_activations(&head.params, &z)?;
            if pre.iter().any(|t| t.data().contains(&0.0)) {
                kinks += 1;
                continue;
            }
            let partner = gaussian(&mut rng, 4, 16);
            let parts = effective_hessian_parts(&head, &LossKind::PairMse, &z, &partner)?;
            max_m = max_m.max(parts.m.frobenius_norm());
            let lmin = *eigenvalues(&parts.h_eff()?)?.last().expect("nonempty");
            min_lambda = min_lambda.min(lmin);
            checked += 1;
        }
    }
    Verdict::new(
        max_m == 0.0 && min_lambda >= NULLITY_LAMBDA_FLOOR && kinks == 0,
        format!("{checked} heads (linear, relu x {NULLITY_SEEDS} seeds): max ||M||_F = {max_m:e}, min lambda = {min_lambda:.2e}, on-kink {kinks}"),
    )
}

fn criterion_5() -> Res<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for act in [ActivationKind::Swish, ActivationKind::GELU] {
        let cases: Vec<_> = (0..INSTABILITY_SEEDS).map(|s| instability_case(act, s)).collect::<Result<_, _>>()?;
        let negative = cases.iter().filter(|c| c.representation_min < INSTABILITY_NEGATIVE).count();
        let triggered: Vec<_> = cases.iter().filter(|c| c.representation_min < LIFT_TRIGGER).collect();
        let lifted = triggered.iter().filter(|c| c.parameter_min < 0.0).count();
        let neg_ok = negative as f64 >= INSTABILITY_FRACTION * INSTABILITY_SEEDS as f64;
        let lift_ok = lifted as f64 >= LIFT_FRACTION * triggered.len() as f64;
        pass &= neg_ok && lift_ok;
        parts.push(format!(
            "{}: negative {negative}/{INSTABILITY_SEEDS}, lifted {lifted}/{}",
            act.name(),
            triggered.len()
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

struct CollapseRuns {
    /// Variance ratios per cell, seeds in `SEEDS` order.
    ratios: BTreeMap<String, Vec<f64>>,
    no_bn_epochs: Vec<Vec<EpochSummary>>,
    seconds: f64,
}

fn collapse_runs() -> Res<CollapseRuns> {
    let start = Instant::now();
    let settings = Settings::preset(ScenarioKind::Collapse);
    let wanted = ["swish-nobn-lr0.005", "relu-nobn-lr0.005", "relu-bn-lr0.005", "relu-nobn-lr0.5"];
    let mut ratios = BTreeMap::new();
    let mut no_bn_epochs = Vec::new();
    for cell in cells(ScenarioKind::Collapse, &settings).into_iter().filter(|c| wanted.contains(&c.name.as_str())) {
        let mut r = Vec::new();
        for &seed in &SEEDS {
            let (_, out) = train_checkpoint(&cell.settings, seed)?;
            r.push(out.variance_ratio());
            if cell.name.ends_with("nobn-lr0.005") {
                no_bn_epochs.push(out.epochs);
            }
        }
        ratios.insert(cell.name, r);
    }
    Ok(CollapseRuns {
        ratios,
        no_bn_epochs,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_6(runs: &CollapseRuns) -> Res<Verdict> {
    let m = |cell: &str| runs.ratios.get(cell).map(|v| mean(v)).ok_or(format!("missing cell {cell}"));
    let (swish, relu, relu_bn, relu_fast) =
        (m("swish-nobn-lr0.005")?, m("relu-nobn-lr0.005")?, m("relu-bn-lr0.005")?, m("relu-nobn-lr0.5")?);
    let checks = [
        swish >= SWISH_ESCAPE,
        relu <= RELU_TRAPPED,
        relu_bn >= RELU_TRAPPED,
        relu_fast >= RELU_TRAPPED,
        runs.seconds <= COLLAPSE_SECONDS,
    ];
    Verdict::new(
        checks.iter().all(|&c| c),
        format!(
            "mean ratios over seeds 0-2: swish {swish:.2} (>= {SWISH_ESCAPE}), relu {relu:.2} (<= {RELU_TRAPPED}), relu+bn {relu_bn:.2} (>= {RELU_TRAPPED}), relu lr 0.5 {relu_fast:.2} (>= {RELU_TRAPPED}); {:.0} s",
            runs.seconds
        ),
    )
}

fn criterion_7(study: &[SingularityOutcome]) -> Res<Verdict> {
    let pre: Vec<f64> = study.iter().map(|s| singularity_ratio(&s.pre)).collect();
    let post: Vec<f64> = study.iter().map(|s| singularity_ratio(&s.post)).collect();
    let ok = pre.iter().all(|r| (PRE_RATIO_BAND.0..=PRE_RATIO_BAND.1).contains(r))
        && post.iter().all(|&r| r <= 1.0 / SINGULARITY_FACTOR);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    Verdict::new(ok, format!("seeds 0-2 aug/random ratio: pre {}, post {}", fmt(&pre), fmt(&post)))
}

fn criterion_8(study: &[SingularityOutcome]) -> Res<Verdict> {
    let fractions: Vec<f64> = study.iter().map(|s| hierarchy_fraction(&s.post)).collect();
    let holding = fractions.iter().filter(|&&f| f == 1.0).count();
    let median_sens: Vec<f64> = study
        .iter()
        .map(|s| {
            let mut v: Vec<f64> = s.post.iter().map(|g| g.relative_sensitivity).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    Verdict::new(
        holding >= MAJORITY,
        format!(
            "hierarchy holds at every anchor on {holding}/3 seeds (anchor fractions {:?}); median relative sensitivity {:?}",
            fractions,
            median_sens.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Res<Verdict> {
    let settings = Settings::preset(ScenarioKind::RankPropagation);
    let mut means = BTreeMap::new();
    for cell in cells(ScenarioKind::RankPropagation, &settings) {
        let ranks: Vec<f64> = SEEDS
            .iter()
            .map(|&s| {
                train_checkpoint(&cell.settings, s)
                    .map(|(_, out)| out.epochs.last().map_or(f64::NAN, |e| e.backbone_effective_rank))
            })
            .collect::<Result<_, _>>()?;
        means.insert(cell.name, mean(&ranks));
    }
    let (lin, non) = (means["linear-head"], means["nonlinear-head"]);
    Verdict::new(
        lin <= RANK_LIMIT && non > RANK_LIMIT,
        format!("mean final backbone effective rank: linear head {lin:.2} (<= {RANK_LIMIT}), nonlinear head {non:.2} (> {RANK_LIMIT})"),
    )
}

fn criterion_10() -> Res<Verdict> {
    let trials = perturbation_trials(16, 32, PERTURBATION_CASES, 0)?;
    let failures = trials.iter().filter(|t| !t.holds).count();
    let weyl = trials.iter().take(WEYL_CASES).filter(|t| !t.weyl_holds).count();
    let tight = trials.iter().map(|t| t.lhs / t.rhs).fold(0.0, f64::max);
    Verdict::new(
        failures == 0 && weyl == 0,
        format!("bound failures {failures}/{PERTURBATION_CASES} (max lhs/rhs {tight:.3}); Weyl failures {weyl}/{WEYL_CASES}"),
    )
}

fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn oracle_effective_rank(points: &[Vec<f64>]) -> Res<f64> {
    let c = stats::centroid(points);
    let d = c.len();
    let gram: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| points.iter().map(|p| (p[a] - c[a]) * (p[b] - c[b])).sum())
                .collect()
        })
        .collect();
    let e = dense_eig(&gram, 100)?;
    let total: f64 = e.values.iter().map(|v| v.max(0.0)).sum();
    let h: f64 = e
        .values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp())
}

fn oracle_batch(points: &[Vec<f64>]) -> Res<(f64, f64)> {
    let n = points.len() as f64;
    let unit: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let r = headlab_oracle::l2(p);
            p.iter().map(|x| x / r).collect()
        })
        .collect();
    let c = stats::centroid(&unit);
    let d = c.len();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| unit.iter().map(|p| (p[a] - c[a]) * (p[b] - c[b])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect();
    let std = (0..d).map(|j| cov[j][j].sqrt()).sum::<f64>() / d as f64;
    let e = dense_eig(&cov, 100)?;
    Ok((std, e.max() / e.min().max(headlab_core::metrics::KAPPA_FLOOR)))
}

fn criterion_11() -> Res<Verdict> {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, a: f64, e: f64| {
        let r = (a - e).abs() / e.abs().max(1.0);
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(r);
    };
    for case in 0..METRIC_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let d = rng.random_range(2..=12);
        let t = rng.random_range(3..=16);
        let orbit = random_points(&mut rng, t, d);
        note("curvature", local_curvature(&orbit)?, stats::second_difference_mean(&orbit));
        note("spread", orbit_spread(&orbit)?, stats::spread(&orbit));
        note("effective_rank", effective_rank(&orbit)?.value, oracle_effective_rank(&orbit)?);
        let classes = rng.random_range(2..=4);
        let per = rng.random_range(1..=3);
        let grid = rng.random_range(2..=6);
        let orbits: Vec<Vec<Vec<Vec<f64>>>> =
            (0..classes).map(|_| (0..per).map(|_| random_points(&mut rng, grid, d)).collect()).collect();
        let got = class_orbit_distances(&orbits)?;
        let intra = mean(&orbits.iter().flatten().map(|o| stats::mean_pairwise_distance(o)).collect::<Vec<_>>());
        let centroids: Vec<Vec<f64>> =
            orbits.iter().map(|c| stats::centroid(&c.iter().flatten().cloned().collect::<Vec<_>>())).collect();
        let inter = stats::mean_pairwise_distance(&centroids);
        note("d_intra", got.d_intra, intra);
        note("d_inter", got.d_inter, inter);
        note("class_orbit_ratio", got.ratio, inter / (intra + headlab_core::metrics::EPS_RATIO));
        let (ba, ha) = (random_points(&mut rng, 1, d).remove(0), random_points(&mut rng, 1, d).remove(0));
        let (bv, hv) = (random_points(&mut rng, grid, d), random_points(&mut rng, grid, d));
        let m_cos = |a: &[f64], v: &[Vec<f64>]| mean(&v.iter().map(|x| stats::cosine(a, x)).collect::<Vec<_>>());
        note("alignment_gain", alignment_gain(&ba, &bv, &ha, &hv)?, m_cos(&ha, &hv) - m_cos(&ba, &bv));
        let n = rng.random_range(d + 2..=3 * d + 2);
        let batch = random_points(&mut rng, n, d);
        let stats_got = batch_statistics(&Tensor::from_rows(&batch)?, false)?;
        let (std, kappa) = oracle_batch(&batch)?;
        note("variance", stats_got.variance, std);
        note("condition_number", stats_got.condition_number, kappa);
    }
    let three = [vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 1.0]];
    let unit = local_curvature(&three)?;
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.0e}")).collect::<Vec<_>>().join(", ");
    Verdict::new(
        max <= METRIC_TOL && unit == 1.0,
        format!("worst rel err over {METRIC_CASES} instances: {detail}; 3-point curvature {unit}"),
    )
}

fn criterion_12(study: &[SingularityOutcome]) -> Res<Verdict> {
    let settings = Settings::preset(ScenarioKind::Probe);
    let mut holding = 0;
    let mut parts = Vec::new();
    for (s, &seed) in study.iter().zip(&SEEDS) {
        let rows = probe_table(&s.trained.pipeline, &s.data, &settings.aug, &settings.analysis, seed)?;
        let g = GuillotineCheck::from_rows(&rows).ok_or("probe table incomplete")?;
        holding += usize::from(g.holds());
        parts.push(format!(
            "xi R2 {:.2}/{:.2}, class gap {:.3}/{:.3}",
            g.backbone_xi, g.head_xi, g.backbone_gap, g.head_gap
        ));
    }
    Verdict::new(
        holding >= MAJORITY,
        format!("{holding}/3 seeds (backbone/head): {}", parts.join("; ")),
    )
}

fn criterion_13(runs: &CollapseRuns) -> Res<Verdict> {
    let (mut worst, mut slow) = (0.0f64, Vec::new());
    for epochs in &runs.no_bn_epochs {
        let v: Vec<f64> = epochs.iter().map(|e| e.variance).collect();
        let k: Vec<f64> = epochs.iter().map(|e| e.condition_number).collect();
        let got = variance_kappa_spearman(epochs);
        let direct = spearman(&v, &k)?;
        let oracle = stats::spearman(&v, &k);
        worst = worst.max((got - oracle).abs()).max((direct - oracle).abs());
        slow.push(epochs.get(1).map_or(f64::NAN, |e| e.mean_timescale_ratio));
    }
    let all_above = slow.iter().all(|&t| t > 1.0);
    Verdict::new(
        worst <= SPEARMAN_TOL && all_above,
        format!(
            "{} no-BN runs: max |rho - oracle| {worst:.0e}; first-epoch timescale ratios {:?}",
            slow.len(),
            slow.iter().map(|t| format!("{t:.0}")).collect::<Vec<_>>()
        ),
    )
}

fn bodies(dir: &Path) -> Res<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext == "csv" || ext == "jsonl" {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            out.insert(name, body_of(&fs::read_to_string(&p)?).to_string());
        }
    }
    Ok(out)
}

fn criterion_14() -> Res<Verdict> {
    let tmp = tempfile::tempdir()?;
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for kind in [ScenarioKind::Orbits, ScenarioKind::HessianTrack, ScenarioKind::Probe, ScenarioKind::PerturbationBound] {
        let mut cfg = ScenarioConfig::new(kind, tmp.path().join("a"));
        cfg.settings.run.epochs = cfg.settings.run.epochs.min(5);
        cfg.settings.analysis.trials = cfg.settings.analysis.trials.min(50);
        cfg.seeds = vec![0, 1];
        let a_dir = tmp.path().join(format!("{kind}-a"));
        let b_dir = tmp.path().join(format!("{kind}-b"));
        cfg.output_dir = a_dir.clone();
        run_scenario(&cfg, Some(1))?;
        cfg.output_dir = b_dir.clone();
        run_scenario(&cfg, Some(2))?;
        let (a, b) = (bodies(&a_dir)?, bodies(&b_dir)?);
        if a.keys().ne(b.keys()) {
            mismatched.push(format!("{kind}: file sets differ"));
        }
        for (name, body) in &a {
            compared += 1;
            if b.get(name) != Some(body) {
                mismatched.push(name.clone());
            }
        }
    }
    Verdict::new(
        compared > 0 && mismatched.is_empty(),
        format!("{compared} CSV/JSONL bodies compared across reruns (1 vs 2 threads); mismatches {mismatched:?}"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let started = Instant::now();
    let mut unexpected = Vec::new();
    let mut report = |id: u32, name: &str, verdict: Res<Verdict>| {
        let (pass, detail) = match verdict {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (pass, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as a known failure)",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} [{name}]: {tag}: {detail}");
        if !pass && !known {
            unexpected.push(id);
        }
    };
    report(1, "second-order autodiff", criterion_1());
    report(2, "extremal eigenvalues", criterion_2());
    report(3, "whitening head", criterion_3());
    report(4, "linear and relu nullity", criterion_4());
    report(5, "generic instability and lift", criterion_5());
    let collapse = collapse_runs();
    match &collapse {
        Ok(runs) => {
            report(6, "collapse dynamics", criterion_6(runs));
        }
        Err(e) => report(6, "collapse dynamics", Err(e.to_string().into())),
    }
    let settings = Settings::preset(ScenarioKind::Singularity);
    let study: Res<Vec<SingularityOutcome>> =
        SEEDS.iter().map(|&s| singularity_study(&settings, s).map_err(Into::into)).collect();
    let with_study = |f: fn(&[SingularityOutcome]) -> Res<Verdict>| match &study {
        Ok(s) => f(s),
        Err(e) => Err(e.to_string().into()),
    };
    report(7, "metric singularity", with_study(criterion_7));
    report(8, "information hierarchy", with_study(criterion_8));
    report(9, "rank propagation", criterion_9());
    report(10, "perturbation bound", criterion_10());
    report(11, "metric fidelity", criterion_11());
    report(12, "guillotine direction", with_study(criterion_12));
    match &collapse {
        Ok(runs) => report(13, "diagnostics", criterion_13(runs)),
        Err(e) => report(13, "diagnostics", Err(e.to_string().into())),
    }
    report(14, "determinism", criterion_14());
    println!("acceptance finished in {:.0} s", started.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
