//! Scenario cells, per-seed runs, aggregation and the report bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use headlab_core::data::{generate_clusters, Dataset, Stage};
use headlab_core::metrics::{spearman, OrbitReport};
use headlab_core::models::{default_predictor_spec, NetworkSpec};
use headlab_core::probes::{fit_probe, ProbeKind, ProbeSpec, ProbeTask, Targets};
use headlab_core::train::{train_run, EpochSummary, RunOutput};
use headlab_core::ActivationKind;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    anchor_geometry, hierarchy_fraction, orbit_alignment_gain, orbit_report, probe_inputs, probe_table,
    singularity_ratio, stage_orbits, AnchorGeometry, GuillotineCheck, ProbeRow, StageOrbits,
};
use crate::error::CliError;
use crate::output::{CsvTable, OutputDir, META_FILE, REPORT_FILE};
use crate::plots::{line_plot, pca_2d, scatter_plot, Series};
use crate::settings::{ScenarioConfig, ScenarioKind, Settings};
use crate::trials::{perturbation_trials, whitening_trials, PerturbationTrial, WhiteningTrial};

/// One configuration of a scenario grid.
#[derive(Clone, Debug)]
pub struct Cell {
    pub name: String,
    pub settings: Settings,
}

fn hidden_activation(spec: &NetworkSpec) -> ActivationKind {
    spec.activations.first().copied().unwrap_or(ActivationKind::Swish)
}

fn with_head(settings: &Settings, head: NetworkSpec) -> Settings {
    let mut s = settings.clone();
    if s.run.predictor.is_some() {
        s.run.predictor = Some(default_predictor_spec(&head));
    }
    s.run.head = head;
    s
}

pub fn cells(kind: ScenarioKind, settings: &Settings) -> Vec<Cell> {
    let head = &settings.run.head;
    let (k_in, k_out) = (head.input_dim(), head.output_dim());
    let width = if head.layer_widths.len() > 2 { head.layer_widths[1] } else { 64 };
    match kind {
        ScenarioKind::Collapse => {
            let g = &settings.grid;
            let mut out = Vec::new();
            for &act in &g.activations {
                for &bn in &g.batch_norm {
                    for &lr in &g.learning_rates {
                        let spec = NetworkSpec::mlp(head.layer_widths.clone(), act)
                            .with_batch_norm(bn)
                            .normalized(head.output_normalize);
                        let mut s = with_head(settings, spec);
                        s.run.optimizer.learning_rate = lr;
                        let name = format!("{}-{}-lr{lr}", act.name(), if bn { "bn" } else { "nobn" });
                        out.push(Cell { name, settings: s });
                    }
                }
            }
            out
        }
        ScenarioKind::DepthAblation => settings
            .grid
            .depths
            .iter()
            .map(|&l| {
                let mut widths = vec![k_in];
                widths.extend(std::iter::repeat_n(width, l - 1));
                widths.push(k_out);
                let spec = NetworkSpec::mlp(widths, hidden_activation(head)).normalized(head.output_normalize);
                Cell {
                    name: format!("depth{l}"),
                    settings: with_head(settings, spec),
                }
            })
            .collect(),
        ScenarioKind::RankPropagation => {
            let nonlinear = NetworkSpec::mlp(vec![k_in, width, k_out], settings.analysis.comparison_activation);
            vec![
                Cell {
                    name: "linear-head".into(),
                    settings: settings.clone(),
                },
                Cell {
                    name: "nonlinear-head".into(),
                    settings: with_head(settings, nonlinear),
                },
            ]
        }
        _ => vec![Cell {
            name: "main".into(),
            settings: settings.clone(),
        }],
    }
}

/// Outcome of one cell and seed.
#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub cell: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// File names relative to the output directory.
    pub files: Vec<String>,
    #[serde(skip)]
    pub epochs_csv: Option<PathBuf>,
    #[serde(skip)]
    pub orbit_csvs: Vec<(Stage, PathBuf)>,
}

impl SeedRun {
    fn new(cell: &Cell, seed: u64) -> Self {
        SeedRun {
            cell: cell.name.clone(),
            seed,
            metrics: BTreeMap::new(),
            files: Vec::new(),
            epochs_csv: None,
            orbit_csvs: Vec::new(),
        }
    }

    fn file(&mut self, p: PathBuf) -> PathBuf {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.files.push(name);
        p
    }

    fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.insert(name.into(), v);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedFailure {
    pub cell: String,
    pub seed: u64,
    pub error: String,
    #[serde(skip)]
    pub exit_code: i32,
}

/// Mean and sample standard deviation over the seeds that finished.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
}

impl Aggregate {
    pub fn of(seeds: Vec<u64>, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Aggregate { mean, std, seeds, values }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub scenario: ScenarioKind,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub runs: Vec<SeedRun>,
    /// Keyed `cell/metric`.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub checks: BTreeMap<String, bool>,
    pub failures: Vec<SeedFailure>,
    pub svg: Vec<String>,
}

impl ReportBundle {
    pub fn aggregate(&self, cell: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates.get(&format!("{cell}/{metric}"))
    }

    /// 0 when every seed finished, otherwise the most severe failure code.
    pub fn exit_code(&self) -> i32 {
        self.failures.iter().map(|f| f.exit_code).min().unwrap_or(0)
    }
}

/// Trains the run configuration of `settings` for one seed.
pub fn train_checkpoint(settings: &Settings, seed: u64) -> headlab_core::Result<(Dataset, RunOutput)> {
    let (run, data) = settings.for_seed(seed);
    let data = generate_clusters(&data)?;
    let out = train_run(&run, &data, &settings.aug)?;
    Ok((data, out))
}

/// Spearman correlation of head variance and condition number across the
/// epoch summaries; NaN when undefined.
pub fn variance_kappa_spearman(epochs: &[EpochSummary]) -> f64 {
    let (v, k): (Vec<f64>, Vec<f64>) = epochs
        .iter()
        .filter(|e| e.variance.is_finite() && e.condition_number.is_finite())
        .map(|e| (e.variance, e.condition_number))
        .unzip();
    spearman(&v, &k).unwrap_or(f64::NAN)
}

fn record_training(out: &OutputDir, run: &mut SeedRun, tag: &str, result: &RunOutput) -> Result<(), CliError> {
    let cell = if tag.is_empty() { run.cell.clone() } else { format!("{}-{tag}", run.cell) };
    let jsonl = out.path(&cell, Some(run.seed), "jsonl");
    out.write_jsonl(&jsonl, &result.to_jsonl()?)?;
    run.file(jsonl);
    let csv = out.path(&cell, Some(run.seed), "csv");
    out.write_csv(&csv, &EpochSummary::CSV_HEADER, result.epochs.iter().map(EpochSummary::csv_record))?;
    run.epochs_csv = Some(run.file(csv));
    let pre = if tag.is_empty() { String::new() } else { format!("{tag}/") };
    let last = result.epochs.last();
    run.metric(format!("{pre}variance_ratio"), result.variance_ratio());
    run.metric(format!("{pre}final_variance"), last.map_or(f64::NAN, |e| e.variance));
    run.metric(format!("{pre}final_condition_number"), last.map_or(f64::NAN, |e| e.condition_number));
    run.metric(format!("{pre}final_effective_rank"), last.map_or(f64::NAN, |e| e.backbone_effective_rank));
    run.metric(
        format!("{pre}first_epoch_timescale"),
        result.epochs.get(1).map_or(f64::NAN, |e| e.mean_timescale_ratio),
    );
    run.metric(format!("{pre}spearman_variance_kappa"), variance_kappa_spearman(&result.epochs));
    if let Some(l) = result.epochs.iter().rev().find_map(|e| e.mean_lambda_min) {
        run.metric(format!("{pre}final_lambda_min"), l);
    }
    Ok(())
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Input => "input",
        Stage::Backbone => "backbone",
        Stage::Head => "head",
    }
}

fn write_orbit_points(out: &OutputDir, run: &mut SeedRun, so: &StageOrbits) -> Result<(), CliError> {
    let dim = so.orbits.first().and_then(|o| o.points.first()).map_or(0, Vec::len);
    let mut header: Vec<String> = ["anchor", "label", "xi"].map(String::from).to_vec();
    header.extend((0..dim).map(|j| format!("z{j}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = so.orbits.iter().enumerate().flat_map(|(a, o)| {
        let label = so.labels[a];
        o.xi_grid.iter().zip(&o.points).map(move |(xi, p)| {
            let mut r = vec![a.to_string(), label.to_string(), format!("{xi:e}")];
            r.extend(p.iter().map(|v| format!("{v:e}")));
            r
        })
    });
    let path = out.path(&format!("{}-points-{}", run.cell, stage_name(so.stage)), Some(run.seed), "csv");
    out.write_csv(&path, &header_refs, rows)?;
    let p = run.file(path);
    run.orbit_csvs.push((so.stage, p));
    Ok(())
}

fn orbits_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let s = &cell.settings;
    let mut run = SeedRun::new(cell, seed);
    let (data, trained) = train_checkpoint(s, seed)?;
    record_training(out, &mut run, "", &trained)?;
    let p = &trained.pipeline;
    let anchors = data.select_anchors(s.analysis.anchors, s.analysis.anchor_seed);
    let grid = &s.analysis.orbit_grid;
    let bb = stage_orbits(p, &data, &s.aug, &anchors, grid, Stage::Backbone)?;
    let hd = stage_orbits(p, &data, &s.aug, &anchors, grid, Stage::Head)?;
    let gain = orbit_alignment_gain(p, &data, &bb, &hd, &anchors)?;
    let reports = [(Stage::Backbone, orbit_report(&bb, gain)?), (Stage::Head, orbit_report(&hd, gain)?)];
    let mut header = vec!["stage"];
    header.extend(OrbitReport::CSV_HEADER);
    let rows = reports.iter().map(|(st, r)| {
        let mut row = vec![stage_name(*st).to_string()];
        row.extend(r.values().iter().map(|v| format!("{v:e}")));
        row
    });
    let path = out.path(&format!("{}-metrics", cell.name), Some(seed), "csv");
    out.write_csv(&path, &header, rows)?;
    run.file(path);
    for (st, r) in &reports {
        for (name, v) in OrbitReport::CSV_HEADER.iter().zip(r.values()) {
            run.metric(format!("{}/{name}", stage_name(*st)), v);
        }
    }
    run.metric("curvature_ratio", reports[1].1.curvature / reports[0].1.curvature);
    write_orbit_points(out, &mut run, &bb)?;
    write_orbit_points(out, &mut run, &hd)?;
    Ok(run)
}

/// Singularity and sensitivity ranks before and after training.
#[derive(Clone, Debug)]
pub struct SingularityOutcome {
    pub pre: Vec<AnchorGeometry>,
    pub post: Vec<AnchorGeometry>,
    pub trained: RunOutput,
    pub data: Dataset,
}

pub fn singularity_study(settings: &Settings, seed: u64) -> Result<SingularityOutcome, CliError> {
    let (run_cfg, data_spec) = settings.for_seed(seed);
    let data = generate_clusters(&data_spec)?;
    let anchors = data.select_anchors(settings.analysis.anchors, settings.analysis.anchor_seed);
    let thr = settings.analysis.rank_threshold;
    let initial = run_cfg.build_pipeline()?;
    let pre = anchor_geometry(&initial, &data, &settings.aug, &anchors, thr)?;
    let trained = train_run(&run_cfg, &data, &settings.aug)?;
    let post = anchor_geometry(&trained.pipeline, &data, &settings.aug, &anchors, thr)?;
    Ok(SingularityOutcome { pre, post, trained, data })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn singularity_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let mut run = SeedRun::new(cell, seed);
    let o = singularity_study(&cell.settings, seed)?;
    record_training(out, &mut run, "", &o.trained)?;
    let mut header = vec!["phase"];
    header.extend(AnchorGeometry::CSV_HEADER);
    let rows = [("pre", &o.pre), ("post", &o.post)].into_iter().flat_map(|(phase, rows)| {
        rows.iter().map(move |g| {
            let mut r = vec![phase.to_string()];
            r.extend(g.csv_record());
            r
        })
    });
    let path = out.path(&format!("{}-anchors", cell.name), Some(seed), "csv");
    out.write_csv(&path, &header, rows)?;
    run.file(path);
    run.metric("pre_ratio", singularity_ratio(&o.pre));
    run.metric("post_ratio", singularity_ratio(&o.post));
    run.metric("hierarchy_fraction", hierarchy_fraction(&o.post));
    run.metric("hierarchy_holds", f64::from(u8::from(hierarchy_fraction(&o.post) == 1.0)));
    run.metric(
        "median_relative_sensitivity",
        median(o.post.iter().map(|g| g.relative_sensitivity).collect()),
    );
    Ok(run)
}

fn probe_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let s = &cell.settings;
    let mut run = SeedRun::new(cell, seed);
    let (data, trained) = train_checkpoint(s, seed)?;
    record_training(out, &mut run, "", &trained)?;
    let rows = probe_table(&trained.pipeline, &data, &s.aug, &s.analysis, seed)?;
    let path = out.path(&format!("{}-probes", cell.name), Some(seed), "csv");
    out.write_csv(&path, &ProbeRow::CSV_HEADER, rows.iter().map(ProbeRow::csv_record))?;
    run.file(path);
    for r in &rows {
        run.metric(format!("{}/{}/{}", stage_name(r.stage), r.probe, r.task), r.score);
        run.metric(format!("{}/gap/{}", stage_name(r.stage), r.task), r.gap);
    }
    if let Some(g) = GuillotineCheck::from_rows(&rows) {
        run.metric("guillotine", f64::from(u8::from(g.holds())));
    }
    Ok(run)
}

fn depth_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let s = &cell.settings;
    let mut run = SeedRun::new(cell, seed);
    let (data, trained) = train_checkpoint(s, seed)?;
    record_training(out, &mut run, "", &trained)?;
    let p = &trained.pipeline;
    let anchors = data.select_anchors(s.analysis.anchors, s.analysis.anchor_seed);
    let grid = &s.analysis.orbit_grid;
    let bb = orbit_report(&stage_orbits(p, &data, &s.aug, &anchors, grid, Stage::Backbone)?, f64::NAN)?;
    let hd = orbit_report(&stage_orbits(p, &data, &s.aug, &anchors, grid, Stage::Head)?, f64::NAN)?;
    let (x, angles, _) = probe_inputs(&data, &s.aug, s.analysis.probe_views, seed)?;
    let mut spec = ProbeSpec::new(ProbeKind::Linear, ProbeTask::RegressXi { generator: 0 }, seed);
    spec.epochs = s.analysis.probe_epochs;
    let probe = fit_probe(&spec, &p.backbone.forward(&x)?, Targets::Values(&angles))?.score;
    run.metric("backbone_curvature", bb.curvature);
    run.metric("head_curvature", hd.curvature);
    run.metric("curvature_ratio", hd.curvature / bb.curvature);
    run.metric("backbone_probe", probe);
    Ok(run)
}

fn whitening_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let s = &cell.settings;
    let mut run = SeedRun::new(cell, seed);
    let trials = whitening_trials(s.run.head.output_dim(), s.run.backbone.output_dim(), s.analysis.trials, seed)?;
    let path = out.path(&cell.name, Some(seed), "csv");
    out.write_csv(&path, &WhiteningTrial::CSV_HEADER, trials.iter().map(WhiteningTrial::csv_record))?;
    run.file(path);
    run.metric("max_deviation", trials.iter().map(|t| t.deviation).fold(0.0, f64::max));
    Ok(run)
}

fn perturbation_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let s = &cell.settings;
    let mut run = SeedRun::new(cell, seed);
    let trials = perturbation_trials(s.run.head.output_dim(), s.run.backbone.output_dim(), s.analysis.trials, seed)?;
    let path = out.path(&cell.name, Some(seed), "csv");
    out.write_csv(&path, &PerturbationTrial::CSV_HEADER, trials.iter().map(PerturbationTrial::csv_record))?;
    run.file(path);
    run.metric("failures", trials.iter().filter(|t| !t.holds).count() as f64);
    run.metric("weyl_failures", trials.iter().filter(|t| !t.weyl_holds).count() as f64);
    run.metric(
        "max_lhs_over_rhs",
        trials.iter().filter(|t| t.rhs > 0.0).map(|t| t.lhs / t.rhs).fold(0.0, f64::max),
    );
    Ok(run)
}

fn train_cell(cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    let mut run = SeedRun::new(cell, seed);
    let (_, trained) = train_checkpoint(&cell.settings, seed)?;
    record_training(out, &mut run, "", &trained)?;
    Ok(run)
}

pub fn run_cell(kind: ScenarioKind, cell: &Cell, seed: u64, out: &OutputDir) -> Result<SeedRun, CliError> {
    match kind {
        ScenarioKind::Collapse | ScenarioKind::HessianTrack | ScenarioKind::RankPropagation => train_cell(cell, seed, out),
        ScenarioKind::Orbits => orbits_cell(cell, seed, out),
        ScenarioKind::Singularity => singularity_cell(cell, seed, out),
        ScenarioKind::Probe => probe_cell(cell, seed, out),
        ScenarioKind::DepthAblation => depth_cell(cell, seed, out),
        ScenarioKind::WhiteningCheck => whitening_cell(cell, seed, out),
        ScenarioKind::PerturbationBound => perturbation_cell(cell, seed, out),
    }
}

/// Worker count from `HEADLAB_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("HEADLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("HEADLAB_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

fn aggregate(runs: &[SeedRun]) -> BTreeMap<String, Aggregate> {
    let mut grouped: BTreeMap<String, (Vec<u64>, Vec<f64>)> = BTreeMap::new();
    for r in runs {
        for (m, &v) in &r.metrics {
            let e = grouped.entry(format!("{}/{m}", r.cell)).or_default();
            e.0.push(r.seed);
            e.1.push(v);
        }
    }
    grouped.into_iter().map(|(k, (s, v))| (k, Aggregate::of(s, v))).collect()
}

fn scenario_checks(kind: ScenarioKind, cells: &[Cell], aggregates: &BTreeMap<String, Aggregate>) -> BTreeMap<String, bool> {
    let mean = |cell: &str, m: &str| aggregates.get(&format!("{cell}/{m}")).map(|a| a.mean);
    let mut checks = BTreeMap::new();
    match kind {
        ScenarioKind::DepthAblation => {
            let series = |m: &str| cells.iter().map(|c| mean(&c.name, m)).collect::<Option<Vec<f64>>>();
            if let Some(p) = series("backbone_probe") {
                checks.insert("backbone_probe_non_decreasing".into(), p.windows(2).all(|w| w[1] >= w[0]));
            }
            if let Some(c) = series("curvature_ratio") {
                checks.insert("curvature_ratio_increasing".into(), c.windows(2).all(|w| w[1] > w[0]));
            }
        }
        ScenarioKind::HessianTrack => {
            if let Some(r) = mean("main", "spearman_variance_kappa") {
                checks.insert("spearman_positive".into(), r > 0.0);
            }
        }
        ScenarioKind::RankPropagation => {
            if let (Some(l), Some(n)) = (
                mean("linear-head", "final_effective_rank"),
                mean("nonlinear-head", "final_effective_rank"),
            ) {
                checks.insert("linear_rank_below_nonlinear".into(), l < n);
            }
        }
        ScenarioKind::Singularity => {
            if let (Some(pre), Some(post)) = (mean("main", "pre_ratio"), mean("main", "post_ratio")) {
                checks.insert("post_ratio_below_pre".into(), post < pre);
            }
        }
        ScenarioKind::PerturbationBound => {
            if let Some(f) = mean("main", "failures") {
                checks.insert("no_bound_failures".into(), f == 0.0);
            }
        }
        _ => {}
    }
    checks
}

fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Runs every cell × seed, writes per-seed files, `report.json` and the
/// timestamp sidecar. Per-seed failures are collected, not propagated.
pub fn run_scenario(config: &ScenarioConfig, threads: Option<usize>) -> Result<ReportBundle, CliError> {
    config.settings.validate()?;
    let started = unix_millis();
    let hash = config.hash();
    let out = OutputDir::create(&config.output_dir, config.scenario.name(), &hash)?;
    let cells = cells(config.scenario, &config.settings);
    let jobs: Vec<(&Cell, u64)> = cells.iter().flat_map(|c| config.seeds.iter().map(move |&s| (c, s))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<SeedRun, (String, u64, CliError)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| run_cell(config.scenario, c, s, &out).map_err(|e| (c.name.clone(), s, e)))
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err((cell, seed, e)) => failures.push(SeedFailure {
                cell,
                seed,
                error: e.to_string(),
                exit_code: e.exit_code(),
            }),
        }
    }
    let aggregates = aggregate(&runs);
    let checks = scenario_checks(config.scenario, &cells, &aggregates);
    let bundle = ReportBundle {
        scenario: config.scenario,
        config_sha256: hash.clone(),
        seeds: config.seeds.clone(),
        output_dir: config.output_dir.clone(),
        runs,
        aggregates,
        checks,
        failures,
        svg: Vec::new(),
    };
    write_report(&bundle, &out)?;
    let meta = serde_json::json!({
        "scenario": config.scenario.name(),
        "config_sha256": hash,
        "seeds": config.seeds,
        "threads": threads,
        "started_unix_ms": started as u64,
        "finished_unix_ms": unix_millis() as u64,
    });
    out.write_text(META_FILE, &format!("{meta:#}\n"))?;
    Ok(bundle)
}

fn write_report(bundle: &ReportBundle, out: &OutputDir) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(bundle).map_err(|e| CliError::Malformed(e.to_string()))?;
    out.write_text(REPORT_FILE, &format!("{text}\n"))?;
    Ok(())
}

type Column = (&'static str, &'static str, fn(f64) -> f64);

const EPOCH_PLOTS: [Column; 3] = [
    ("variance", "variance", |v| v),
    ("condition_number", "log10 condition number", f64::log10),
    ("mean_lambda_min", "lambda_min", |v| v),
];

/// Line plots of every cell's epoch summaries (one series per seed) and
/// PCA scatters of recorded orbits. Nothing is written unless every
/// input parses.
pub fn emit_plots(bundle: &mut ReportBundle) -> Result<Vec<PathBuf>, CliError> {
    let mut pending: Vec<(String, String)> = Vec::new();
    let mut by_cell: BTreeMap<&str, Vec<(u64, CsvTable)>> = BTreeMap::new();
    for r in &bundle.runs {
        if let Some(p) = &r.epochs_csv {
            let t = CsvTable::read(p)?;
            if t.rows.is_empty() {
                return Err(CliError::Malformed(format!("{} has no rows", p.display())));
            }
            by_cell.entry(&r.cell).or_default().push((r.seed, t));
        }
    }
    let prefix = format!("{}-{}", bundle.scenario.name(), &bundle.config_sha256[..8]);
    for (cell, tables) in &by_cell {
        for (column, label, f) in EPOCH_PLOTS {
            let mut series = Vec::new();
            for (seed, t) in tables {
                let x = t.column("epoch")?;
                let y = t.column(column)?;
                series.push(Series {
                    label: format!("seed {seed}"),
                    points: x.into_iter().zip(y.into_iter().map(f)).collect(),
                });
            }
            if series.iter().all(|s| s.points.iter().all(|(_, y)| !y.is_finite())) {
                continue;
            }
            let svg = line_plot(&format!("{cell}: {label}"), "epoch", label, &series)?;
            pending.push((format!("{prefix}-{cell}-{column}.svg"), svg));
        }
    }
    for r in &bundle.runs {
        for (stage, p) in &r.orbit_csvs {
            let t = CsvTable::read(p)?;
            let dims: Vec<usize> = (0..t.header.len()).filter(|&i| t.header[i].starts_with('z')).collect();
            let (labels, xi) = (t.column("label")?, t.column("xi")?);
            let points: Vec<Vec<f64>> = t
                .rows
                .iter()
                .map(|row| dims.iter().map(|&i| row[i].parse::<f64>().unwrap_or(f64::NAN)).collect())
                .collect();
            let proj = pca_2d(&points)?;
            let groups: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
            let stars: Vec<bool> = xi.iter().map(|&v| v == 0.0).collect();
            let title = format!(
                "{} {} seed {} ({:.1}% variance in PC1-2)",
                r.cell,
                stage_name(*stage),
                r.seed,
                100.0 * proj.explained
            );
            let svg = scatter_plot(&title, &proj.coords, &groups, &stars)?;
            pending.push((format!("{prefix}-{}-pca-{}-seed{}.svg", r.cell, stage_name(*stage), r.seed), svg));
        }
    }
    let root: &Path = &bundle.output_dir;
    let mut written = Vec::with_capacity(pending.len());
    for (name, svg) in pending {
        let path = root.join(&name);
        std::fs::write(&path, svg).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        bundle.svg.push(name);
        written.push(path);
    }
    let out = OutputDir::create(root, bundle.scenario.name(), &bundle.config_sha256)?;
    write_report(bundle, &out)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_grid_is_a_full_product() {
        let s = Settings::preset(ScenarioKind::Collapse);
        let c = cells(ScenarioKind::Collapse, &s);
        assert_eq!(c.len(), 24);
        let bn = c.iter().find(|c| c.name == "relu-bn-lr0.5").unwrap();
        assert!(bn.settings.run.head.use_batch_norm);
        assert_eq!(bn.settings.run.optimizer.learning_rate, 0.5);
        assert_eq!(bn.settings.run.head.activations, vec![ActivationKind::ReLU]);
        let pred = bn.settings.run.predictor.as_ref().unwrap();
        assert_eq!(pred.activations, vec![ActivationKind::ReLU]);
    }

    #[test]
    fn depth_cells_change_only_the_head() {
        let s = Settings::preset(ScenarioKind::DepthAblation);
        let c = cells(ScenarioKind::DepthAblation, &s);
        let widths: Vec<Vec<usize>> = c.iter().map(|c| c.settings.run.head.layer_widths.clone()).collect();
        assert_eq!(widths, vec![vec![32, 16], vec![32, 64, 16], vec![32, 64, 64, 16]]);
        assert!(c.iter().all(|c| c.settings.run.backbone == s.run.backbone));
    }

    #[test]
    fn aggregate_uses_sample_deviation() {
        let a = Aggregate::of(vec![0, 1, 2], vec![1.0, 2.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.std, 1.0);
        assert_eq!(Aggregate::of(vec![4], vec![5.0]).std, 0.0);
    }

    #[test]
    fn exit_code_reflects_failures() {
        let mut b = ReportBundle {
            scenario: ScenarioKind::Orbits,
            config_sha256: "0".repeat(64),
            seeds: vec![0, 1],
            output_dir: PathBuf::new(),
            runs: Vec::new(),
            aggregates: BTreeMap::new(),
            checks: BTreeMap::new(),
            failures: Vec::new(),
            svg: Vec::new(),
        };
        assert_eq!(b.exit_code(), 0);
        b.failures.push(SeedFailure {
            cell: "main".into(),
            seed: 1,
            error: "non-finite".into(),
            exit_code: CliError::Numeric(headlab_core::Error::NonFinite("x".into())).exit_code(),
        });
        assert_eq!(b.exit_code(), 3);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }
}
