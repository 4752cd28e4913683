//! Scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{MpcConfig, ThermostatConfig};
use crate::error::{Error, Result};
use crate::excitation::{MonteCarloConfig, SelectorConfig};
use crate::monitor::MonitorConfig;
use crate::network::ThermalNetwork;
use crate::simulator::{OccupancySchedule, WeatherModel};
use crate::ukf::UkfConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Thermostat,
    Mpc,
    MpcWithExcitation,
}

/// Model handed to the MPC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum ModelSource {
    /// Current UKF mean (falls back to the truth when the estimator is off).
    Estimate,
    True,
    /// Fixed RC products and heater gains, e.g. from an earlier acquisition run.
    Fixed {
        p: Vec<f64>,
        q: Vec<f64>,
    },
}

/// Multiply one RC product of the MPC model by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corruption {
    /// Parameter label such as `R12C1`.
    pub parameter: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Run the MPC before the estimator has converged.
    pub force_mpc: bool,
    pub model: ModelSource,
    pub corruption: Vec<Corruption>,
    pub mpc: MpcConfig,
    pub thermostat: ThermostatConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Thermostat,
            force_mpc: false,
            model: ModelSource::Estimate,
            corruption: Vec::new(),
            mpc: MpcConfig::default(),
            thermostat: ThermostatConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// Heaters off.
    Passive,
    Thermostat,
    /// Thermostat plus excitation experiments.
    Excite,
    /// Whatever `controller.kind` says.
    Controller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    /// Minutes from the start of the run.
    pub start: f64,
    pub mode: PhaseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Largest coefficient of variation (std/mean) of any parameter.
    pub max_cv: f64,
    /// Largest relative change of any parameter over `window`.
    pub max_drift: f64,
    pub window: f64,
    /// History needed before convergence can be declared.
    pub min_history: f64,
    /// Parameter process noise multiplier once converged.
    pub converged_noise_scale: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { max_cv: 0.05, max_drift: 0.01, window: 720.0, min_history: 1440.0, converged_noise_scale: 0.1 }
    }
}

/// Initial parameter estimate as a multiple of the true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SeedDistribution {
    /// Factor drawn uniformly from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Factor `1 + error` or `1 − error`, sign drawn per parameter.
    Signed { error: f64 },
}

impl SeedDistribution {
    pub fn draw(&self, rng: &mut impl rand::Rng) -> f64 {
        match *self {
            SeedDistribution::Uniform { lo, hi } if hi > lo => rng.random_range(lo..hi),
            SeedDistribution::Uniform { lo, .. } => lo,
            SeedDistribution::Signed { error } => {
                if rng.random_bool(0.5) {
                    1.0 + error
                } else {
                    1.0 - error
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub enabled: bool,
    pub ukf: UkfConfig,
    pub monitor: MonitorConfig,
    pub convergence: ConvergenceConfig,
    /// How the initial parameter estimates are drawn around the truth.
    pub seeds: SeedDistribution,
    /// Run the consensus bank alongside the primary filter.
    pub bank: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            ukf: UkfConfig::default(),
            monitor: MonitorConfig::default(),
            convergence: ConvergenceConfig::default(),
            seeds: SeedDistribution::Uniform { lo: 0.5, hi: 2.0 },
            bank: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationMethod {
    None,
    Eigen,
    Variational,
    Montecarlo,
    /// Eigen generator, heuristic selector in every era.
    HeuristicSelector,
    /// Eigen generator, optimal selector once the MPC runs.
    OptimalSelector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub method: ExcitationMethod,
    pub selector: SelectorConfig,
    pub montecarlo: MonteCarloConfig,
    /// Minutes between regenerating candidates.
    pub refresh: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            method: ExcitationMethod::None,
            selector: SelectorConfig::default(),
            montecarlo: MonteCarloConfig::default(),
            refresh: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub enabled: bool,
    /// Linearize at the UKF estimate instead of the truth.
    pub on_estimates: bool,
    pub threshold: f64,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self { enabled: false, on_estimates: false, threshold: crate::analysis::RANK_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Network file; the built-in two-zone building when absent.
    pub network: Option<PathBuf>,
    /// Minutes.
    pub duration: f64,
    pub dt: f64,
    pub substep: f64,
    /// Drives sensor noise and the estimator's initial parameters.
    pub seed: u64,
    pub sensor_noise: f64,
    /// One per internal node.
    pub initial_temps: Vec<f64>,
    pub weather: WeatherModel,
    pub schedule: OccupancySchedule,
    pub controller: ControllerConfig,
    /// Protocol overriding the controller from each start time on.
    pub phases: Vec<Phase>,
    pub estimator: EstimatorConfig,
    pub excitation: ExcitationConfig,
    pub observability: ObservabilityConfig,
    /// Only `compute_metrics` and the report count occupied steps within this
    /// many °F of the bounds as compliant.
    pub comfort_tolerance: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            network: None,
            duration: 1440.0,
            dt: 15.0,
            substep: 1.0,
            seed: 0,
            sensor_noise: 0.1,
            initial_temps: vec![65.0, 65.0],
            weather: WeatherModel::default(),
            schedule: OccupancySchedule::default(),
            controller: ControllerConfig::default(),
            phases: Vec::new(),
            estimator: EstimatorConfig::default(),
            excitation: ExcitationConfig::default(),
            observability: ObservabilityConfig::default(),
            comfort_tolerance: 0.5,
            out_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a scenario file. A relative `network` path is resolved against
    /// the scenario file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        if let (Some(net), Some(dir)) = (&cfg.network, path.parent()) {
            if net.is_relative() {
                cfg.network = Some(dir.join(net));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Use `seed` for sensors, parameter seeds and weather noise alike.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.weather.seed = seed;
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn network(&self) -> Result<ThermalNetwork> {
        match &self.network {
            None => Ok(ThermalNetwork::two_zone()),
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("network file {} does not exist", p.display())));
                }
                ThermalNetwork::load(p)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.substep > 0.0) {
            return Err(Error::Config("dt and substep must be positive".into()));
        }
        if !(self.duration >= 0.0) || (self.duration / self.dt - (self.duration / self.dt).round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "duration {} is not a whole number of {}-minute steps",
                self.duration, self.dt
            )));
        }
        if (self.dt / self.substep - (self.dt / self.substep).round()).abs() > 1e-9 {
            return Err(Error::Config("dt must be a whole number of substeps".into()));
        }
        if !(self.sensor_noise >= 0.0) {
            return Err(Error::Config("sensor_noise must be non-negative".into()));
        }
        let net = self.network()?;
        if self.initial_temps.len() != net.internal_nodes().len() {
            return Err(Error::Config(format!(
                "{} initial temperatures for {} internal nodes",
                self.initial_temps.len(),
                net.internal_nodes().len()
            )));
        }
        self.weather.validate()?;
        self.schedule.validate()?;
        self.controller.mpc.validate()?;
        if (self.controller.mpc.dt - self.dt).abs() > 1e-12 {
            return Err(Error::Config("controller.mpc.dt must equal dt".into()));
        }
        self.controller.thermostat.validate(self.dt)?;
        self.estimator.ukf.validate()?;
        self.excitation.selector.validate()?;
        match self.estimator.seeds {
            SeedDistribution::Uniform { lo, hi } if !(lo > 0.0 && lo <= hi) => {
                return Err(Error::Config("uniform seeds need 0 < lo <= hi".into()));
            }
            SeedDistribution::Signed { error } if !(0.0..1.0).contains(&error) => {
                return Err(Error::Config("signed seed error must lie in [0, 1)".into()));
            }
            _ => {}
        }
        if self.phases.windows(2).any(|w| !(w[1].start > w[0].start)) {
            return Err(Error::Config("phase starts must be strictly increasing".into()));
        }
        let labels = net.layout().labels();
        for c in &self.controller.corruption {
            if !labels.contains(&c.parameter) {
                return Err(Error::Config(format!("unknown parameter {} in corruption", c.parameter)));
            }
            if !(c.factor > 0.0) {
                return Err(Error::Config("corruption factors must be positive".into()));
            }
        }
        if let ModelSource::Fixed { p, q } = &self.controller.model {
            let layout = net.layout();
            if p.len() != layout.p_len() || q.len() != layout.q_len() {
                return Err(Error::Config("fixed model has the wrong number of parameters".into()));
            }
        }
        if self.controller.kind != ControllerKind::Thermostat && !self.estimator.enabled && !self.controller.force_mpc {
            return Err(Error::Config(
                "without an estimator the MPC never runs unless controller.force_mpc is set".into(),
            ));
        }
        if self.excitation.method != ExcitationMethod::None && !self.estimator.enabled {
            return Err(Error::Config("excitation needs the estimator".into()));
        }
        if self.estimator.bank && self.estimator.monitor.bank_size < 2 {
            return Err(Error::Config("a consensus bank needs at least two filters".into()));
        }
        if self.excitation.refresh < self.dt {
            return Err(Error::Config("excitation.refresh must be at least one step".into()));
        }
        Ok(())
    }

    /// Mode in force at time `t`.
    pub fn phase_at(&self, t: f64) -> PhaseMode {
        self.phases.iter().rev().find(|p| p.start <= t).map_or(PhaseMode::Controller, |p| p.mode)
    }
}
