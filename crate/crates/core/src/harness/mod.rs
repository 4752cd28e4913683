//! Scenario files, the closed-loop driver, shipped presets and result export.

pub mod compare;
pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use compare::{compare_runs, Comparison, ComparisonRow};
pub use config::{
    ControllerConfig, ControllerKind, ConvergenceConfig, Corruption, EstimatorConfig, ExcitationConfig,
    ExcitationMethod, ModelSource, ObservabilityConfig, Phase, PhaseMode, ScenarioConfig, SeedDistribution,
};
pub use output::{fmt_f64, write_outputs, ReportSummary};
pub use presets::{run_preset, write_preset, Preset, PresetOutcome};
pub use run::{
    convergence_criterion, run_scenario, EstimateRow, Event, EventKind, FinalEstimate, HistorySample, ManifestEntry,
    RunReport, RunStatus,
};
