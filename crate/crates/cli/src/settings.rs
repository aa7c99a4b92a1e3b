//! Scenario settings, per-scenario presets and TOML overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use headlab_core::data::{AugmentationSpec, DatasetSpec};
use headlab_core::losses::LossKind;
use headlab_core::models::{default_predictor_spec, NetworkSpec};
use headlab_core::train::{HeadInit, OptimizerConfig, RunConfig};
use headlab_core::ActivationKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Collapse,
    HessianTrack,
    Orbits,
    Singularity,
    WhiteningCheck,
    DepthAblation,
    RankPropagation,
    PerturbationBound,
    Probe,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::Collapse,
        ScenarioKind::HessianTrack,
        ScenarioKind::Orbits,
        ScenarioKind::Singularity,
        ScenarioKind::WhiteningCheck,
        ScenarioKind::DepthAblation,
        ScenarioKind::RankPropagation,
        ScenarioKind::PerturbationBound,
        ScenarioKind::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Collapse => "collapse",
            ScenarioKind::HessianTrack => "hessian-track",
            ScenarioKind::Orbits => "orbits",
            ScenarioKind::Singularity => "singularity",
            ScenarioKind::WhiteningCheck => "whitening-check",
            ScenarioKind::DepthAblation => "depth-ablation",
            ScenarioKind::RankPropagation => "rank-propagation",
            ScenarioKind::PerturbationBound => "perturbation-bound",
            ScenarioKind::Probe => "probe",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown scenario `{s}`")))
    }
}

/// Ablation axes. Scenarios read only the axes they sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub activations: Vec<ActivationKind>,
    pub batch_norm: Vec<bool>,
    pub learning_rates: Vec<f64>,
    /// Head depths (number of linear layers).
    pub depths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    /// Orbit anchors per checkpoint.
    pub anchors: usize,
    pub anchor_seed: u64,
    /// Relative cutoff for sensitivity ranks.
    pub rank_threshold: f64,
    /// Augmented copies of every sample used as probe rows.
    pub probe_views: usize,
    pub probe_epochs: usize,
    pub probe_hidden: usize,
    /// Sweep angles for orbit metrics.
    pub orbit_grid: Vec<f64>,
    /// Random cases for the whitening and perturbation checks.
    pub trials: usize,
    /// Hidden activation of the matched nonlinear head in rank propagation.
    pub comparison_activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub data: DatasetSpec,
    pub aug: AugmentationSpec,
    pub run: RunConfig,
    pub grid: Grid,
    pub analysis: Analysis,
}

const D: usize = 32;
const K: usize = 16;
const WIDTH: usize = 64;

fn clusters(spread: f64) -> DatasetSpec {
    DatasetSpec {
        num_classes: 4,
        ambient_dim: D,
        cluster_spread: spread,
        samples_per_class: 128,
        seed: 0,
        nuisance_amplitude: 1.0,
    }
}

fn default_analysis() -> Analysis {
    Analysis {
        anchors: 15,
        anchor_seed: 1729,
        rank_threshold: 1e-3,
        probe_views: 4,
        probe_epochs: headlab_core::probes::DEFAULT_PROBE_EPOCHS,
        probe_hidden: WIDTH,
        orbit_grid: headlab_core::data::quarter_sweep_grid(),
        trials: 100,
        comparison_activation: ActivationKind::Swish,
    }
}

fn single_grid(act: ActivationKind, lr: f64) -> Grid {
    Grid {
        activations: vec![act],
        batch_norm: vec![false],
        learning_rates: vec![lr],
        depths: vec![2],
    }
}

/// Pseudo-collapsed Swish head behind a linear backbone, asymmetric
/// SimSiam objective, Adam at the flow-proxy rate.
pub fn collapse_run() -> RunConfig {
    let head = NetworkSpec::mlp(vec![D, WIDTH, K], ActivationKind::Swish);
    RunConfig {
        loss: LossKind::SimSiamCosine,
        backbone: NetworkSpec::mlp(vec![D, D], ActivationKind::Linear),
        predictor: Some(default_predictor_spec(&head)),
        head,
        symmetric: false,
        optimizer: OptimizerConfig::adam(0.005),
        epochs: 30,
        batch_size: 128,
        seed: 0,
        init: HeadInit::PseudoCollapse { alpha: 0.1 },
        track_spectra: false,
        spectra_batches: 3,
        spectra_iters: headlab_core::spectral::DEFAULT_POWER_ITERS,
    }
}

/// InfoNCE invariance training of a Swish head on a linear backbone.
pub fn invariance_run() -> RunConfig {
    RunConfig {
        loss: LossKind::info_nce(0.1),
        backbone: NetworkSpec::mlp(vec![D, D], ActivationKind::Linear),
        head: NetworkSpec::mlp(vec![D, WIDTH, K], ActivationKind::Swish),
        predictor: None,
        symmetric: true,
        optimizer: OptimizerConfig::adam(1e-3),
        epochs: 200,
        batch_size: 128,
        seed: 0,
        init: HeadInit::Standard,
        track_spectra: false,
        spectra_batches: 3,
        spectra_iters: headlab_core::spectral::DEFAULT_POWER_ITERS,
    }
}

/// Linear head k = 4 on a 16-wide linear backbone with weight decay.
pub fn rank_run() -> RunConfig {
    RunConfig {
        loss: LossKind::info_nce(0.1),
        backbone: NetworkSpec::mlp(vec![D, K], ActivationKind::Linear),
        head: NetworkSpec::mlp(vec![K, 4], ActivationKind::Linear),
        predictor: None,
        symmetric: true,
        optimizer: OptimizerConfig::adam(3e-2).with_weight_decay(1e-4),
        epochs: 200,
        batch_size: 16,
        seed: 0,
        init: HeadInit::Standard,
        track_spectra: false,
        spectra_batches: 3,
        spectra_iters: headlab_core::spectral::DEFAULT_POWER_ITERS,
    }
}

impl Settings {
    pub fn preset(kind: ScenarioKind) -> Settings {
        let rotation = AugmentationSpec::plane_rotation(std::f64::consts::FRAC_PI_4);
        let analysis = default_analysis();
        match kind {
            ScenarioKind::Collapse => Settings {
                data: clusters(1.0),
                aug: rotation,
                run: collapse_run(),
                grid: Grid {
                    activations: vec![
                        ActivationKind::Linear,
                        ActivationKind::ReLU,
                        ActivationKind::GELU,
                        ActivationKind::Swish,
                    ],
                    batch_norm: vec![false, true],
                    learning_rates: vec![0.005, 0.05, 0.5],
                    depths: vec![2],
                },
                analysis,
            },
            ScenarioKind::HessianTrack => {
                let mut run = collapse_run();
                run.track_spectra = true;
                Settings {
                    data: clusters(1.0),
                    aug: rotation,
                    run,
                    grid: single_grid(ActivationKind::Swish, 0.005),
                    analysis,
                }
            }
            ScenarioKind::Orbits | ScenarioKind::Singularity | ScenarioKind::Probe => Settings {
                data: clusters(0.3),
                aug: rotation,
                run: invariance_run(),
                grid: single_grid(ActivationKind::Swish, 1e-3),
                analysis,
            },
            ScenarioKind::DepthAblation => Settings {
                data: clusters(0.3),
                aug: rotation,
                run: invariance_run(),
                grid: Grid {
                    depths: vec![1, 2, 3],
                    ..single_grid(ActivationKind::Swish, 1e-3)
                },
                analysis,
            },
            ScenarioKind::RankPropagation => Settings {
                data: clusters(1.0),
                aug: rotation,
                run: rank_run(),
                grid: single_grid(ActivationKind::Linear, 3e-2),
                analysis,
            },
            ScenarioKind::WhiteningCheck => Settings {
                data: clusters(0.3),
                aug: rotation,
                run: invariance_run(),
                grid: single_grid(ActivationKind::Linear, 0.0),
                analysis,
            },
            ScenarioKind::PerturbationBound => Settings {
                data: clusters(0.3),
                aug: rotation,
                run: invariance_run(),
                grid: single_grid(ActivationKind::Linear, 0.0),
                analysis: Analysis {
                    trials: 1000,
                    ..analysis
                },
            },
        }
    }

    /// The run and data configuration for one seed.
    pub fn for_seed(&self, seed: u64) -> (RunConfig, DatasetSpec) {
        let mut run = self.run.clone();
        run.seed = seed;
        let mut data = self.data.clone();
        data.seed = seed;
        (run, data)
    }

    /// Deep-merges a TOML table of overrides (dotted keys become nested
    /// tables) onto these settings. Unknown keys are rejected.
    pub fn apply_overrides(&self, overrides: &toml::Table) -> Result<Settings, CliError> {
        let mut base = serde_json::to_value(self).map_err(|e| CliError::Config(e.to_string()))?;
        let patch = serde_json::to_value(overrides).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, &patch);
        let merged: Settings = serde_json::from_value(base).map_err(|e| CliError::Config(e.to_string()))?;
        let check = serde_json::to_value(&merged).map_err(|e| CliError::Config(e.to_string()))?;
        let mut path = Vec::new();
        ensure_applied(&check, &patch, &mut path)?;
        Ok(merged)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.data.validate().map_err(CliError::config)?;
        self.aug.validate(self.data.ambient_dim).map_err(CliError::config)?;
        self.run.validate().map_err(CliError::config)?;
        if self.run.backbone.input_dim() != self.data.ambient_dim {
            return Err(CliError::Config(format!(
                "backbone input width {} differs from data dimension {}",
                self.run.backbone.input_dim(),
                self.data.ambient_dim
            )));
        }
        if self.analysis.anchors == 0 || self.analysis.probe_views == 0 || self.analysis.trials == 0 {
            return Err(CliError::Config("anchors, probe_views and trials must be positive".into()));
        }
        if self.grid.depths.iter().any(|&l| l == 0) {
            return Err(CliError::Config("head depth must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self, kind: ScenarioKind) -> String {
        let body = serde_json::to_string(&(kind, self)).expect("settings serialize");
        let digest = Sha256::digest(body.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same(p, q)),
        (Value::Object(x), Value::Object(y)) => y.iter().all(|(k, v)| x.get(k).is_some_and(|u| same(u, v))),
        _ => a == b,
    }
}

fn ensure_applied(actual: &Value, patch: &Value, path: &mut Vec<String>) -> Result<(), CliError> {
    match (actual, patch) {
        (Value::Object(a), Value::Object(p)) => {
            for (k, v) in p {
                path.push(k.clone());
                let inner = a.get(k).ok_or_else(|| CliError::Config(format!("unknown setting `{}`", path.join("."))))?;
                ensure_applied(inner, v, path)?;
                path.pop();
            }
            Ok(())
        }
        (a, p) if same(a, p) => Ok(()),
        _ => Err(CliError::Config(format!("setting `{}` was not accepted", path.join(".")))),
    }
}

/// Parsed config file: scenario table plus optional seeds and output dir.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub settings: Settings,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, output_dir: impl Into<PathBuf>) -> Self {
        ScenarioConfig {
            scenario,
            settings: Settings::preset(scenario),
            seeds: DEFAULT_SEEDS.to_vec(),
            output_dir: output_dir.into(),
        }
    }

    /// Reads `[scenario]`: optional `name`, `seeds`, `output_dir`; every
    /// other key is an override onto the preset.
    pub fn from_toml(scenario: ScenarioKind, text: &str) -> Result<Self, CliError> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(extra) = doc.keys().find(|k| k.as_str() != "scenario") {
            return Err(CliError::Config(format!("unexpected top-level table `{extra}`")));
        }
        let mut table = match doc.get("scenario") {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(CliError::Config("`scenario` must be a table".into())),
            None => toml::Table::new(),
        };
        if let Some(name) = table.remove("name") {
            let name = name.as_str().ok_or_else(|| CliError::Config("`name` must be a string".into()))?;
            if name.parse::<ScenarioKind>()? != scenario {
                return Err(CliError::Config(format!("config is for `{name}`, not `{scenario}`")));
            }
        }
        let seeds = match table.remove("seeds") {
            None => DEFAULT_SEEDS.to_vec(),
            Some(v) => parse_seed_list(&v)?,
        };
        let output_dir = match table.remove("output_dir") {
            None => PathBuf::from(format!("runs/{scenario}")),
            Some(toml::Value::String(s)) => PathBuf::from(s),
            Some(_) => return Err(CliError::Config("`output_dir` must be a string".into())),
        };
        let settings = Settings::preset(scenario).apply_overrides(&table)?;
        settings.validate()?;
        Ok(ScenarioConfig {
            scenario,
            settings,
            seeds,
            output_dir,
        })
    }

    pub fn load(scenario: ScenarioKind, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(scenario, &text)
    }

    pub fn hash(&self) -> String {
        self.settings.hash(self.scenario)
    }
}

fn parse_seed_list(v: &toml::Value) -> Result<Vec<u64>, CliError> {
    let arr = v.as_array().ok_or_else(|| CliError::Config("`seeds` must be an array".into()))?;
    let seeds = arr
        .iter()
        .map(|s| {
            s.as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| CliError::Config("seeds must be non-negative integers".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_seeds(seeds)
}

/// `0,1,2` style list from the command line.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let seeds = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("bad seed `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_seeds(seeds)
}

fn check_seeds(seeds: Vec<u64>) -> Result<Vec<u64>, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(CliError::Config("seed list has duplicates".into()));
    }
    Ok(seeds)
}
