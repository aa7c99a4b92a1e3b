//! Scenario runner: presets, TOML overrides, per-seed runs on a worker
//! pool, CSV/JSONL logs, `report.json` aggregates and SVG plots.

pub mod analysis;
pub mod error;
pub mod output;
pub mod plots;
pub mod scenarios;
pub mod settings;
pub mod trials;

pub use error::CliError;
pub use scenarios::{emit_plots, run_scenario, ReportBundle};
pub use settings::{ScenarioConfig, ScenarioKind, Settings};
