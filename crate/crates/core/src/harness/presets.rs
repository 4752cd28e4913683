//! Shipped scenarios.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::compare::{compare_runs, Comparison};
use crate::harness::config::{
    ControllerKind, Corruption, ExcitationMethod, ModelSource, Phase, PhaseMode, ScenarioConfig, SeedDistribution,
};
use crate::harness::output::{write_outputs, ReportSummary};
use crate::harness::run::{run_scenario, RunReport, RunStatus};
use crate::simulator::BiasSchedule;

const DAY: f64 = 1440.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Two days without excitation; the zone-to-zone products stay unidentified.
    Fig5Failure,
    /// Forced MPC on a model with corrupted zone-to-zone products against the thermostat.
    Fig6BadModel,
    /// Day 1 passive, day 2 thermostat, day 3 thermostat with excitation.
    Fig7Acquisition,
    /// Acquisition, then a thermostat week and an MPC week on the acquired model.
    Table2Comparison,
    /// The acquisition run with observability snapshots.
    Fig910Observability,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Fig5Failure,
        Preset::Fig6BadModel,
        Preset::Fig7Acquisition,
        Preset::Table2Comparison,
        Preset::Fig910Observability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig5Failure => "fig5-failure",
            Preset::Fig6BadModel => "fig6-badmodel",
            Preset::Fig7Acquisition => "fig7-acquisition",
            Preset::Table2Comparison => "table2-comparison",
            Preset::Fig910Observability => "fig9-10-observability",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            Error::Config(format!("unknown preset {name}; known presets: {}", known.join(", ")))
        })
    }
}

/// Day 1 passive, day 2 thermostat, day 3 thermostat plus heuristic excitation.
pub fn acquisition(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: "acquisition".into(),
        duration: 3.0 * DAY,
        initial_temps: vec![65.0, 65.0],
        phases: vec![
            Phase { start: 0.0, mode: PhaseMode::Passive },
            Phase { start: DAY, mode: PhaseMode::Thermostat },
            Phase { start: 2.0 * DAY, mode: PhaseMode::Excite },
        ],
        ..ScenarioConfig::default()
    };
    cfg.excitation.method = ExcitationMethod::HeuristicSelector;
    cfg.with_seed(seed)
}

/// The first two acquisition days with ±50 % initial parameter error.
pub fn fig5_failure(seed: u64) -> ScenarioConfig {
    let mut cfg = acquisition(seed);
    cfg.name = "failure".into();
    cfg.duration = 2.0 * DAY;
    cfg.phases.truncate(2);
    cfg.excitation.method = ExcitationMethod::None;
    cfg.estimator.seeds = SeedDistribution::Signed { error: 0.5 };
    cfg
}

pub fn fig7_acquisition(seed: u64) -> ScenarioConfig {
    acquisition(seed)
}

pub fn fig910_observability(seed: u64) -> ScenarioConfig {
    let mut cfg = acquisition(seed);
    cfg.name = "observability".into();
    cfg.observability.enabled = true;
    cfg
}

/// A week of outdoor temperatures whose daily mean falls from the mid-50s to the teens.
pub fn comparison_week(seed: u64, name: &str) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: name.into(),
        duration: 7.0 * DAY,
        initial_temps: vec![68.0, 68.0],
        ..ScenarioConfig::default()
    };
    cfg.weather.bias = BiasSchedule::daily(&[35.0, 29.0, 23.0, 16.0, 10.0, 3.0, -5.0]).expect("valid bias");
    cfg.estimator.enabled = false;
    cfg.with_seed(seed)
}

pub fn thermostat_week(seed: u64) -> ScenarioConfig {
    comparison_week(seed, "thermostat")
}

/// MPC on a fixed model, run on the same weather as [`thermostat_week`].
pub fn mpc_week(seed: u64, model: ModelSource) -> ScenarioConfig {
    let mut cfg = comparison_week(seed, "mpc");
    cfg.controller.kind = ControllerKind::Mpc;
    cfg.controller.force_mpc = true;
    cfg.controller.model = model;
    cfg
}

/// Thermostat week against MPC on the true model with zone 1's side of the
/// zone-1/zone-2 wall scaled by 0.2. The model then loses zone-1 heat across
/// the wall without zone 2 gaining it, so keeping zone 2 hot looks like a
/// cheap way to hold zone 1.
pub fn fig6_pair(seed: u64) -> (ScenarioConfig, ScenarioConfig) {
    let base = thermostat_week(seed);
    let mut bad = mpc_week(seed, ModelSource::True);
    bad.name = "bad-model-mpc".into();
    bad.controller.corruption = vec![Corruption { parameter: "R12C1".into(), factor: 0.2 }];
    (base, bad)
}

#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub preset: Preset,
    pub runs: Vec<RunReport>,
    /// Second comparison run against the first, for paired presets.
    pub comparison: Option<Comparison>,
}

impl PresetOutcome {
    pub fn run(&self, name: &str) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.config.name == name)
    }
}

fn pair(preset: Preset, a: &ScenarioConfig, b: &ScenarioConfig, prefix: Vec<RunReport>) -> Result<PresetOutcome> {
    let (ra, rb) = rayon::join(|| run_scenario(a), || run_scenario(b));
    let (ra, rb) = (ra?, rb?);
    let comparison = compare_runs(&ReportSummary::from_report(&ra), &ReportSummary::from_report(&rb))?;
    let mut runs = prefix;
    runs.push(ra);
    runs.push(rb);
    Ok(PresetOutcome { preset, runs, comparison: Some(comparison) })
}

/// Model acquired by an acquisition run, or an error if it failed.
pub fn acquired_model(report: &RunReport) -> Result<ModelSource> {
    if let RunStatus::Failed(m) = &report.status {
        return Err(Error::Degenerate(format!("acquisition run failed: {m}")));
    }
    let est = report.final_estimate.as_ref().ok_or_else(|| Error::Config("acquisition run has no estimator".into()))?;
    let np = report.network.layout().p_len();
    Ok(ModelSource::Fixed { p: est.mean[..np].to_vec(), q: est.mean[np..].to_vec() })
}

/// Run a preset. `true_model` makes the `table2-comparison` MPC week use the true
/// parameters instead of the acquired estimate.
pub fn run_preset(preset: Preset, seed: u64, true_model: bool) -> Result<PresetOutcome> {
    let single = |cfg: ScenarioConfig| -> Result<PresetOutcome> {
        Ok(PresetOutcome { preset, runs: vec![run_scenario(&cfg)?], comparison: None })
    };
    match preset {
        Preset::Fig5Failure => single(fig5_failure(seed)),
        Preset::Fig7Acquisition => single(fig7_acquisition(seed)),
        Preset::Fig910Observability => single(fig910_observability(seed)),
        Preset::Fig6BadModel => {
            let (a, b) = fig6_pair(seed);
            pair(preset, &a, &b, Vec::new())
        }
        Preset::Table2Comparison => {
            let (model, prefix) = if true_model {
                (ModelSource::True, Vec::new())
            } else {
                let acq = run_scenario(&fig7_acquisition(seed))?;
                (acquired_model(&acq)?, vec![acq])
            };
            pair(preset, &thermostat_week(seed), &mpc_week(seed, model), prefix)
        }
    }
}

/// One directory per run under `dir`, plus `comparison.csv` for paired presets.
pub fn write_preset(outcome: &mut PresetOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for run in &mut outcome.runs {
        let sub = dir.join(&run.config.name);
        write_outputs(run, &sub)?;
    }
    if let Some(c) = &outcome.comparison {
        std::fs::write(dir.join("comparison.csv"), c.to_csv())?;
    }
    Ok(())
}
