//! Scenario configuration, Monte Carlo campaigns and result export.
//!
//! Seeding: run `i` of a campaign with base seed `b` uses
//! `mix(b + i * 0x9E3779B97F4A7C15)` (SplitMix64 finaliser), and every noise
//! stream and the run's watermark key are derived from that by tag. Threshold
//! calibration runs use the same rule on a separate, tagged base, so they
//! never share seeds with evaluation runs.

mod config;
mod export;
mod metrics;
pub mod presets;
mod runner;

pub use config::{
    AttackConfig, ChannelsConfig, FakeKind, FakeUnits, ModelConfig, OutputConfig, ScenarioConfig,
    WatermarkConfig,
};
pub use export::{
    emit_plot_data, export_results, load_thresholds, plot_columns, read_csv, read_summary,
    save_thresholds, CsvRow, ExportFormat, CSV_COLUMNS,
};
pub use metrics::{monte_carlo, summarize, wilson_interval, MetricsSummary, TestBreakdown, Z95};
pub use runner::{run_scenario, Rejection, RunArtifacts, RunResult, Scenario};
