//! The closed loop: sensors, estimator, monitor, excitation, controller, plant.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{compute_metrics, snapshot, ObservabilitySnapshot, ScenarioMetrics};
use crate::control::{
    active_lower_bounds, build_mpc_problem, compute_preheat, horizon_bounds, solve_mpc, thermostat_control, MpcProblem,
    MpcSolution, ThermostatState,
};
use crate::error::{Error, Result};
use crate::excitation::{
    generate_eigen, generate_montecarlo, generate_variational, select_heuristic, select_optimal,
    variational_candidates, ExcitationCandidate, Experiment, MonteCarloScenario, SelectorState,
};
use crate::harness::config::{
    ControllerKind, ConvergenceConfig, ExcitationMethod, ModelSource, PhaseMode, ScenarioConfig,
};
use crate::monitor::{check_physics, checkpoint, consensus_test, restore, Checkpoint};
use crate::network::{discrete_model, minimal_parameterization, DiscreteDynamics, ParameterVector, ThermalNetwork};
use crate::rng::{stream, TAG_SEEDS};
use crate::simulator::{
    comfort_bounds, measure, step_plant, weather_forecast, Mode, Plant, PlantState, SimulationTrace, TraceRow,
};
use crate::solver::SolveStatus;
use crate::ukf::{parameter_covariance_block, predict, update, UkfState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Checkpoint,
    Violation,
    Restore,
    Consensus,
    Converged,
    Experiment,
    Excitation,
    Fallback,
    Failure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Checkpoint => "checkpoint",
            EventKind::Violation => "violation",
            EventKind::Restore => "restore",
            EventKind::Consensus => "consensus",
            EventKind::Converged => "converged",
            EventKind::Experiment => "experiment",
            EventKind::Excitation => "excitation",
            EventKind::Fallback => "fallback",
            EventKind::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub message: String,
}

/// Primary filter after the update of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub step: usize,
    pub time: f64,
    /// `p` then `q`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Every node.
    pub temps: Vec<f64>,
    /// Normalized squared error of the temperature block against the truth.
    pub nees: f64,
    pub converged: bool,
    pub noise_scale: f64,
}

/// Input to [`convergence_criterion`].
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySample {
    pub time: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Every parameter's coefficient of variation is below `max_cv` and its
/// relative change over the last `window` minutes is below `max_drift`.
/// Always false with less than `min_history` minutes of history.
pub fn convergence_criterion(history: &[HistorySample], config: &ConvergenceConfig) -> bool {
    let (Some(first), Some(last)) = (history.first(), history.last()) else {
        return false;
    };
    if last.time - first.time < config.min_history - 1e-9 {
        return false;
    }
    let cv_ok = last.mean.iter().zip(&last.variance).all(|(m, v)| v.max(0.0).sqrt() < config.max_cv * m.abs());
    if !cv_ok {
        return false;
    }
    let k = history.partition_point(|s| s.time < last.time - config.window - 1e-9);
    let then = &history[k];
    last.mean.iter().zip(&then.mean).all(|(now, before)| (now - before).abs() < config.max_drift * before.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Numerical failure; the trace ends at the failing step.
    Failed(String),
}

impl RunStatus {
    pub fn as_str(&self) -> &str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Failed(_) => "failed",
        }
    }
}

/// Final primary-filter parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEstimate {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    /// Covariance of `p` then `q`.
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub network: ThermalNetwork,
    pub status: RunStatus,
    pub trace: SimulationTrace,
    pub metrics: ScenarioMetrics,
    /// True `p` then `q`.
    pub truth: Vec<f64>,
    pub estimates: Vec<EstimateRow>,
    pub final_estimate: Option<FinalEstimate>,
    pub converged_at: Option<f64>,
    pub events: Vec<Event>,
    pub experiments: Vec<Experiment>,
    /// Physics violations of the primary filter.
    pub violations: usize,
    pub observability: Vec<ObservabilitySnapshot>,
    /// Filled in when the outputs are written.
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn parameter_labels(&self) -> Vec<String> {
        self.network.layout().labels()
    }

    /// Estimate row nearest to time `t`, if the estimator ran.
    pub fn estimate_at(&self, t: f64) -> Option<&EstimateRow> {
        self.estimates.iter().min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }
}

/// Run one scenario. Configuration errors are returned as errors; a numerical
/// failure mid-run yields a report with [`RunStatus::Failed`] and the trace so far.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    let network = config.network()?;
    let mut runner = Runner::new(config, network)?;
    let status = match runner.execute() {
        Ok(()) => RunStatus::Completed,
        Err(e) => {
            let t = runner.trace.rows.len() as f64 * config.dt;
            runner.log(t, EventKind::Failure, e.to_string());
            RunStatus::Failed(e.to_string())
        }
    };
    Ok(runner.finish(status))
}

struct Filter {
    state: UkfState,
    initial: Vec<f64>,
    checkpoint: Checkpoint,
    /// `(u, z)` for every step since the checkpoint.
    since: Vec<(DVector<f64>, DVector<f64>)>,
    boost_until: f64,
}

struct Decision {
    u: DVector<f64>,
    mode: Mode,
    r_min: Vec<f64>,
    r_max: Vec<f64>,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    net: ThermalNetwork,
    truth: ParameterVector,
    plant: Plant,
    state: PlantState,
    internal: Vec<usize>,
    /// Row in the internal ordering for each control input.
    control_rows: Vec<usize>,
    preheat: Vec<f64>,
    thermostat: ThermostatState,
    filters: Vec<Filter>,
    history: Vec<HistorySample>,
    consensus_ok: bool,
    converged_at: Option<f64>,
    candidates: Vec<ExcitationCandidate>,
    next_refresh: f64,
    experiment: Option<Experiment>,
    experiments: Vec<Experiment>,
    selector: SelectorState,
    u_prev: DVector<f64>,
    trace: SimulationTrace,
    estimates: Vec<EstimateRow>,
    events: Vec<Event>,
    violations: usize,
    observability: Vec<ObservabilitySnapshot>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ScenarioConfig, net: ThermalNetwork) -> Result<Self> {
        let truth = minimal_parameterization(&net);
        let plant = Plant::new(net.clone(), cfg.substep)?;
        let state = plant.initial_state(&cfg.initial_temps, &cfg.weather, 0.0)?;
        let internal = net.internal_nodes();
        let heated = net.heated_nodes();
        let control_rows = heated
            .iter()
            .map(|h| internal.iter().position(|i| i == h).expect("heaters sit on internal nodes"))
            .collect();
        let preheat = if cfg.controller.thermostat.preheat.is_empty() {
            let model = discrete_model(&truth, &net, cfg.dt)?;
            compute_preheat(&model, &net, &cfg.schedule, cfg.controller.thermostat.design_ext_temp)?
        } else if cfg.controller.thermostat.preheat.len() == heated.len() {
            cfg.controller.thermostat.preheat.clone()
        } else {
            return Err(Error::Config(format!(
                "{} preheat values for {} heated zones",
                cfg.controller.thermostat.preheat.len(),
                heated.len()
            )));
        };
        Ok(Self {
            cfg,
            thermostat: ThermostatState::new(heated.len()),
            u_prev: DVector::zeros(heated.len()),
            net,
            truth,
            plant,
            state,
            internal,
            control_rows,
            preheat,
            filters: Vec::new(),
            history: Vec::new(),
            consensus_ok: false,
            converged_at: None,
            candidates: Vec::new(),
            next_refresh: 0.0,
            experiment: None,
            experiments: Vec::new(),
            selector: SelectorState::new(&cfg.excitation.selector),
            trace: SimulationTrace::new(cfg.dt),
            estimates: Vec::new(),
            events: Vec::new(),
            violations: 0,
            observability: Vec::new(),
        })
    }

    fn log(&mut self, time: f64, kind: EventKind, message: String) {
        self.events.push(Event { time, kind, message });
    }

    fn execute(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        for k in 0..self.cfg.steps() {
            let t = k as f64 * dt;
            let z = measure(&self.state, self.cfg.sensor_noise, self.cfg.seed);
            if self.cfg.estimator.enabled {
                self.estimate(k, t, &z)?;
            }
            if let Some(e) = &self.experiment {
                if t >= e.start + e.steps as f64 * dt - 1e-9 {
                    self.experiment = None;
                }
            }
            let d = self.control(t, &z)?;
            if self.cfg.observability.enabled {
                self.observe(t)?;
            }
            let ext = self.net.external_nodes().first().map_or(f64::NAN, |&e| self.state.temps[e]);
            self.trace.push(TraceRow {
                step: k,
                time: t,
                true_temps: self.state.temps.iter().copied().collect(),
                measured: z.iter().copied().collect(),
                t_ext: ext,
                u: d.u.iter().copied().collect(),
                r_min: d.r_min,
                r_max: d.r_max,
                mode: d.mode,
            });
            self.state = step_plant(&self.plant, &self.state, &d.u, &self.cfg.weather, dt)?;
            self.u_prev = d.u;
        }
        Ok(())
    }

    // ---- estimation ----

    fn noise_scale(&self, boost_until: f64, t: f64) -> f64 {
        let mon = &self.cfg.estimator.monitor;
        let mut s = 1.0;
        if t < boost_until {
            s *= mon.restore_noise_boost;
        }
        if self.converged_at.is_some() {
            s *= self.cfg.estimator.convergence.converged_noise_scale;
        }
        s
    }

    fn seed_filters(&mut self, t: f64, z: &DVector<f64>) -> Result<()> {
        let est = &self.cfg.estimator;
        let count = if est.bank { est.monitor.bank_size } else { 1 };
        let truth = self.truth.stacked();
        for i in 0..count {
            let mut rng = stream(self.cfg.seed, TAG_SEEDS, i as u64);
            let seeded: Vec<f64> = truth.iter().map(|&v| v * est.seeds.draw(&mut rng)).collect();
            let np = self.truth.p.len();
            let pv = self
                .truth
                .with_values(DVector::from_column_slice(&seeded[..np]), DVector::from_column_slice(&seeded[np..]));
            let state = UkfState::new(z, &pv, &est.ukf)?;
            self.filters.push(Filter {
                checkpoint: checkpoint(&state, t),
                state,
                initial: seeded,
                since: Vec::new(),
                boost_until: f64::NEG_INFINITY,
            });
        }
        Ok(())
    }

    fn advance(&self, state: &UkfState, u: &DVector<f64>, z: &DVector<f64>, scale: f64) -> Result<UkfState> {
        let ukf = &self.cfg.estimator.ukf;
        let pred = predict(state, u, self.cfg.dt, ukf, &self.net, scale)?;
        Ok(update(&pred.state, z, ukf)?.0)
    }

    fn estimate(&mut self, k: usize, t: f64, z: &DVector<f64>) -> Result<()> {
        let mon = self.cfg.estimator.monitor.clone();
        if k == 0 {
            self.seed_filters(t, z)?;
        } else {
            for i in 0..self.filters.len() {
                let scale = self.noise_scale(self.filters[i].boost_until, t);
                let next = self.advance(&self.filters[i].state, &self.u_prev, z, scale)?;
                let f = &mut self.filters[i];
                f.state = next;
                f.since.push((self.u_prev.clone(), z.clone()));
            }
        }
        for i in 0..self.filters.len() {
            self.guard(i, t, &mon)?;
        }
        if self.filters.len() > 1 && k > 0 && (t / mon.consensus_every).fract().abs() < 1e-9 {
            let states: Vec<UkfState> = self.filters.iter().map(|f| f.state.clone()).collect();
            let report = consensus_test(&states, mon.consensus_threshold)?;
            self.consensus_ok = report.consensus;
            let msg = match report.outlier() {
                None => format!("agree max_distance={:.3}", report.max_distance()),
                Some(o) => format!("disagree max_distance={:.3} outlier=filter{o}", report.max_distance()),
            };
            self.log(t, EventKind::Consensus, msg);
        }
        let primary = self.filters[0].state.clone();
        let range = primary.parameter_range();
        let mean: Vec<f64> = range.clone().map(|i| primary.x[i]).collect();
        let variance: Vec<f64> = range.map(|i| primary.p[(i, i)]).collect();
        self.history.push(HistorySample { time: t, mean: mean.clone(), variance: variance.clone() });
        let consensus_gate = self.filters.len() < 2 || self.consensus_ok;
        if self.converged_at.is_none()
            && consensus_gate
            && convergence_criterion(&self.history, &self.cfg.estimator.convergence)
        {
            self.converged_at = Some(t);
            self.log(t, EventKind::Converged, "parameter estimates converged".into());
        }
        let n = primary.n_nodes();
        let err = primary.x.rows(0, n) - &self.state.temps;
        let nees = primary.p.view((0, 0), (n, n)).into_owned().cholesky().map_or(f64::NAN, |c| err.dot(&c.solve(&err)));
        self.estimates.push(EstimateRow {
            step: k,
            time: t,
            mean,
            std: variance.iter().map(|v| v.max(0.0).sqrt()).collect(),
            temps: primary.x.rows(0, n).iter().copied().collect(),
            nees,
            converged: self.converged_at.is_some(),
            noise_scale: self.noise_scale(self.filters[0].boost_until, t),
        });
        Ok(())
    }

    /// Physics check, restore-and-replay on violation, checkpoint when due.
    fn guard(&mut self, i: usize, t: f64, mon: &crate::monitor::MonitorConfig) -> Result<()> {
        let violations = check_physics(&self.filters[i].state, &self.filters[i].initial, mon.floor_rel);
        if violations.is_empty() {
            if t - self.filters[i].checkpoint.time >= mon.checkpoint_every - 1e-9 {
                let f = &mut self.filters[i];
                f.checkpoint = checkpoint(&f.state, t);
                f.since.clear();
                if i == 0 {
                    self.log(t, EventKind::Checkpoint, "filter0".into());
                }
            }
            return Ok(());
        }
        if i == 0 {
            self.violations += 1;
        }
        let list: Vec<String> = violations.iter().map(|v| format!("{}={:.6e}", v.label, v.value)).collect();
        self.log(t, EventKind::Violation, format!("filter{i} {}", list.join(" ")));
        let boost_until = t + mon.restore_boost_duration;
        let replay = std::mem::take(&mut self.filters[i].since);
        let cp_time = self.filters[i].checkpoint.time;
        let mut state = restore(&self.filters[i].checkpoint);
        for (s, (u, z)) in replay.iter().enumerate() {
            let time = cp_time + (s + 1) as f64 * self.cfg.dt;
            state = self.advance(&state, u, z, self.noise_scale(boost_until, time))?;
        }
        let f = &mut self.filters[i];
        f.state = state;
        f.since = replay;
        f.boost_until = boost_until;
        let still = check_physics(&f.state, &f.initial, mon.floor_rel).len();
        let replayed = f.since.len();
        self.log(
            t,
            EventKind::Restore,
            format!("filter{i} from={cp_time} replayed={replayed} remaining_violations={still}"),
        );
        Ok(())
    }

    // ---- control ----

    fn control(&mut self, t: f64, z: &DVector<f64>) -> Result<Decision> {
        let n = self.internal.len();
        match self.cfg.phase_at(t) {
            PhaseMode::Passive => {
                let (r_min, r_max) = comfort_bounds(&self.cfg.schedule, t, n);
                Ok(Decision { u: DVector::zeros(self.control_rows.len()), mode: Mode::Passive, r_min, r_max })
            }
            PhaseMode::Thermostat => self.thermostat_step(t, z, false),
            PhaseMode::Excite => self.thermostat_step(t, z, true),
            PhaseMode::Controller => match self.cfg.controller.kind {
                ControllerKind::Thermostat => self.thermostat_step(t, z, false),
                kind => {
                    let excite = kind == ControllerKind::MpcWithExcitation;
                    if self.cfg.controller.force_mpc || self.converged_at.is_some() {
                        self.mpc_step(t, z, excite)
                    } else {
                        self.thermostat_step(t, z, excite)
                    }
                }
            },
        }
    }

    /// Column of the active experiment that applies at time `t`.
    fn experiment_column(&self, t: f64) -> Option<(&Experiment, usize)> {
        let e = self.experiment.as_ref()?;
        let j = ((t - e.start) / self.cfg.dt).round();
        (j >= 0.0 && (j as usize) < e.steps).then_some((e, j as usize))
    }

    fn raised_bounds(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, hi) = comfort_bounds(&self.cfg.schedule, t, self.internal.len());
        if let Some((e, j)) = self.experiment_column(t) {
            for (r, v) in lo.iter_mut().enumerate() {
                *v = v.max(e.lower[(r, j)]);
            }
        }
        (lo, hi)
    }

    fn thermostat_decision(&self, t: f64, z: &DVector<f64>) -> Result<(DVector<f64>, ThermostatState)> {
        let mut lower = active_lower_bounds(&self.cfg.schedule, t, &self.preheat);
        if let Some((e, j)) = self.experiment_column(t) {
            for (l, &r) in self.control_rows.iter().enumerate() {
                lower[l] = lower[l].max(e.lower[(r, j)]);
            }
        }
        let temps: Vec<f64> = self.control_rows.iter().map(|&r| z[self.internal[r]]).collect();
        thermostat_control(&temps, &lower, t, &self.thermostat, &self.cfg.controller.thermostat)
    }

    fn thermostat_step(&mut self, t: f64, z: &DVector<f64>, excite: bool) -> Result<Decision> {
        if excite && self.experiment.is_none() {
            let (baseline, _) = self.thermostat_decision(t, z)?;
            self.try_heuristic(t, &baseline);
        }
        let (u, next) = self.thermostat_decision(t, z)?;
        self.thermostat = next;
        let mode = if self.experiment_column(t).is_some() { Mode::Excitation } else { Mode::Thermostat };
        let (r_min, r_max) = self.raised_bounds(t);
        Ok(Decision { u, mode, r_min, r_max })
    }

    fn mpc_params(&self) -> ParameterVector {
        let mut pv = match &self.cfg.controller.model {
            ModelSource::Estimate if !self.filters.is_empty() => self.filters[0].state.params(),
            ModelSource::Estimate | ModelSource::True => self.truth.clone(),
            ModelSource::Fixed { p, q } => {
                self.truth.with_values(DVector::from_column_slice(p), DVector::from_column_slice(q))
            }
        };
        let labels = self.net.layout().labels();
        let np = pv.p.len();
        for c in &self.cfg.controller.corruption {
            if let Some(k) = labels.iter().position(|l| *l == c.parameter) {
                if k < np {
                    pv.p[k] *= c.factor;
                } else {
                    pv.q[k - np] *= c.factor;
                }
            }
        }
        pv
    }

    /// Internal temperatures the controllers plan from.
    fn planning_temps(&self, z: &DVector<f64>) -> DVector<f64> {
        let src = if self.filters.is_empty() { z.clone() } else { self.filters[0].state.temps() };
        DVector::from_iterator(self.internal.len(), self.internal.iter().map(|&i| src[i]))
    }

    fn mpc_problem(&self, model: &DiscreteDynamics, t: f64, t0: &DVector<f64>) -> Result<MpcProblem> {
        let mpc = &self.cfg.controller.mpc;
        let h = mpc.horizon;
        let forecast = weather_forecast(&self.cfg.weather, t, h, self.cfg.dt);
        let (mut lo, hi) = horizon_bounds(&self.cfg.schedule, t, self.internal.len(), h, self.cfg.dt);
        if let Some(e) = &self.experiment {
            let offset = ((t - e.start) / self.cfg.dt).round() as usize;
            for k in 0..h {
                let j = k + offset;
                if j >= e.steps {
                    break;
                }
                for r in 0..lo.nrows() {
                    lo[(r, k)] = lo[(r, k)].max(e.lower[(r, j)]);
                }
            }
        }
        build_mpc_problem(model, t0, &forecast, &lo, &hi, mpc)
    }

    fn solve(&self, t: f64, model: &DiscreteDynamics, t0: &DVector<f64>) -> Result<(MpcProblem, MpcSolution)> {
        let problem = self.mpc_problem(model, t, t0)?;
        let sol = solve_mpc(&problem)?;
        if sol.status == SolveStatus::NumericalFailure {
            return Err(Error::Degenerate(format!("MPC solver: {}", sol.status.as_str())));
        }
        Ok((problem, sol))
    }

    fn mpc_step(&mut self, t: f64, z: &DVector<f64>, excite: bool) -> Result<Decision> {
        let t0 = self.planning_temps(z);
        let planned = discrete_model(&self.mpc_params(), &self.net, self.cfg.dt).and_then(|model| {
            let (problem, sol) = self.solve(t, &model, &t0)?;
            Ok((model, problem, sol))
        });
        let (model, problem, mut sol) = match planned {
            Ok(v) => v,
            Err(e) => return self.fallback(t, z, e),
        };
        if excite && self.experiment.is_none() {
            self.try_excite_mpc(t, &model, &t0, &problem, &sol);
            if self.experiment.is_some() {
                match self.solve(t, &model, &t0) {
                    Ok((_, s)) => sol = s,
                    Err(e) => return self.fallback(t, z, e),
                }
            }
        }
        // keep the thermostat's switch timers in step with the applied input
        let u = sol.u.column(0).map(|v| v.clamp(0.0, 1.0));
        for l in 0..u.len() {
            let on = u[l] > 0.5;
            if on != self.thermostat.on[l] {
                self.thermostat.on[l] = on;
                self.thermostat.last_switch[l] = t;
            }
        }
        let mode = if self.experiment_column(t).is_some() { Mode::Excitation } else { Mode::Mpc };
        let (r_min, r_max) = self.raised_bounds(t);
        Ok(Decision { u, mode, r_min, r_max })
    }

    fn fallback(&mut self, t: f64, z: &DVector<f64>, err: Error) -> Result<Decision> {
        self.log(t, EventKind::Fallback, err.to_string());
        let mut d = self.thermostat_step(t, z, false)?;
        d.mode = Mode::Fallback;
        Ok(d)
    }

    // ---- excitation ----

    fn refresh_candidates(&mut self, t: f64) {
        if t < self.next_refresh - 1e-9 && !self.candidates.is_empty() {
            return;
        }
        self.next_refresh = t + self.cfg.excitation.refresh;
        match self.generate(t) {
            Ok(c) => self.candidates = c,
            Err(e) => {
                self.candidates.clear();
                self.log(t, EventKind::Excitation, format!("generator failed: {e}"));
            }
        }
    }

    fn generate(&self, t: f64) -> Result<Vec<ExcitationCandidate>> {
        let f = &self.filters[0].state;
        let params = f.params();
        match self.cfg.excitation.method {
            ExcitationMethod::None => Ok(Vec::new()),
            ExcitationMethod::Eigen | ExcitationMethod::HeuristicSelector | ExcitationMethod::OptimalSelector => {
                generate_eigen(&parameter_covariance_block(f), &self.net)
            }
            ExcitationMethod::Variational => {
                let sens = generate_variational(&params, &self.net, &f.temps())?;
                let o = f.p_offset();
                let var: Vec<f64> = (0..params.p.len()).map(|k| f.p[(o + k, o + k)]).collect();
                Ok(variational_candidates(&sens, &var, &self.net))
            }
            ExcitationMethod::Montecarlo => {
                let (o, d) = (f.p_offset(), params.p.len() + params.q.len());
                let cov = f.p.view((o, o), (d, d)).into_owned();
                let temps = f.temps();
                let scenario = MonteCarloScenario {
                    temps: DVector::from_iterator(self.internal.len(), self.internal.iter().map(|&i| temps[i])),
                    start: t,
                    schedule: self.cfg.schedule.clone(),
                    weather: self.cfg.weather.clone(),
                };
                let mut mc = self.cfg.excitation.montecarlo.clone();
                mc.seed ^= self.cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add((t / self.cfg.dt) as u64);
                Ok(generate_montecarlo(&params, &cov, &self.net, &scenario, &mc)?.candidates(&self.net))
            }
        }
    }

    fn start_experiment(&mut self, t: f64, e: Experiment) {
        let msg = format!(
            "{} target={} source={} steps={} gain={:.3} effort={:.3} baseline_effort={:.3}",
            e.kind.as_str(),
            e.target.label(&self.net),
            e.source.as_str(),
            e.steps,
            e.predicted_gain,
            e.predicted_effort,
            e.baseline_effort
        );
        self.log(t, EventKind::Experiment, msg);
        self.experiments.push(e.clone());
        self.experiment = Some(e);
    }

    fn try_heuristic(&mut self, t: f64, baseline: &DVector<f64>) {
        self.refresh_candidates(t);
        let Some(candidate) = self.candidates.first().cloned() else { return };
        let temps = self.planning_temps(&self.filters[0].state.temps());
        let steps = self.cfg.excitation.selector.heuristic_steps;
        let forecast = weather_forecast(&self.cfg.weather, t, steps, self.cfg.dt);
        let (lo, hi) = horizon_bounds(&self.cfg.schedule, t, self.internal.len(), steps, self.cfg.dt);
        let chosen = discrete_model(&self.filters[0].state.params(), &self.net, self.cfg.dt).and_then(|model| {
            select_heuristic(
                &candidate,
                &self.net,
                &model,
                &temps,
                baseline,
                &forecast,
                &lo,
                &hi,
                t,
                &self.cfg.excitation.selector,
            )
        });
        match chosen {
            Ok(Some(e)) => self.start_experiment(t, e),
            Ok(None) => {}
            Err(e) => self.log(t, EventKind::Excitation, format!("heuristic selector failed: {e}")),
        }
    }

    fn try_excite_mpc(
        &mut self,
        t: f64,
        model: &DiscreteDynamics,
        t0: &DVector<f64>,
        problem: &MpcProblem,
        sol: &MpcSolution,
    ) {
        if self.cfg.excitation.method != ExcitationMethod::OptimalSelector {
            let u0 = sol.u.column(0).map(|v| v.clamp(0.0, 1.0));
            self.refresh_candidates(t);
            let Some(candidate) = self.candidates.first().cloned() else { return };
            let steps = self.cfg.excitation.selector.heuristic_steps;
            let forecast = weather_forecast(&self.cfg.weather, t, steps, self.cfg.dt);
            let (lo, hi) = horizon_bounds(&self.cfg.schedule, t, self.internal.len(), steps, self.cfg.dt);
            match select_heuristic(
                &candidate,
                &self.net,
                model,
                t0,
                &u0,
                &forecast,
                &lo,
                &hi,
                t,
                &self.cfg.excitation.selector,
            ) {
                Ok(Some(e)) => self.start_experiment(t, e),
                Ok(None) => {}
                Err(e) => self.log(t, EventKind::Excitation, format!("heuristic selector failed: {e}")),
            }
            return;
        }
        self.refresh_candidates(t);
        let candidates = self.candidates.clone();
        for c in &candidates {
            match select_optimal(c, &self.net, problem, sol, t, &self.selector, &self.cfg.excitation.selector) {
                Ok(sel) => {
                    if let Some(e) = sel.experiment {
                        self.selector.reset();
                        self.start_experiment(t, e);
                        return;
                    }
                }
                Err(e) => {
                    self.log(t, EventKind::Excitation, format!("optimal selector failed: {e}"));
                    return;
                }
            }
        }
        self.selector.decay();
    }

    // ---- diagnostics ----

    fn observe(&mut self, t: f64) -> Result<()> {
        let obs = &self.cfg.observability;
        let (temps, params) = if obs.on_estimates && !self.filters.is_empty() {
            (self.filters[0].state.temps(), self.filters[0].state.params())
        } else {
            (self.state.temps.clone(), self.truth.clone())
        };
        self.observability.push(snapshot(t, &temps, &params, &self.net, self.cfg.dt, obs.threshold)?);
        Ok(())
    }

    fn finish(self, status: RunStatus) -> RunReport {
        let metrics = compute_metrics(&self.trace, &self.cfg.schedule, &self.internal, self.cfg.comfort_tolerance);
        let final_estimate = self.filters.first().map(|f| {
            let s = &f.state;
            let (o, d) = (s.p_offset(), s.dim() - s.p_offset());
            FinalEstimate {
                labels: self.net.layout().labels(),
                mean: s.parameter_range().map(|i| s.x[i]).collect(),
                covariance: s.p.view((o, o), (d, d)).into_owned(),
            }
        });
        RunReport {
            config: self.cfg.clone(),
            truth: self.truth.stacked().iter().copied().collect(),
            network: self.net,
            status,
            trace: self.trace,
            metrics,
            estimates: self.estimates,
            final_estimate,
            converged_at: self.converged_at,
            events: self.events,
            experiments: self.experiments,
            violations: self.violations,
            observability: self.observability,
            manifest: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(time: f64, mean: f64, var: f64) -> HistorySample {
        HistorySample { time, mean: vec![mean], variance: vec![var] }
    }

    #[test]
    fn fresh_filter_has_not_converged() {
        let cfg = ConvergenceConfig::default();
        assert!(!convergence_criterion(&[sample(0.0, 100.0, 1.0)], &cfg));
        assert!(!convergence_criterion(&[], &cfg));
    }

    #[test]
    fn tight_and_steady_converges() {
        let cfg = ConvergenceConfig::default();
        let h: Vec<_> = (0..=96).map(|k| sample(k as f64 * 15.0, 100.0, 1.0)).collect();
        assert!(convergence_criterion(&h, &cfg));
    }

    #[test]
    fn drifting_mean_fails_drift_clause() {
        let cfg = ConvergenceConfig::default();
        let h: Vec<_> = (0..=96).map(|k| sample(k as f64 * 15.0, 100.0 + 0.05 * k as f64, 1.0)).collect();
        // 48 steps × 0.05 = 2.4 over 12 h, above 1 %
        assert!(!convergence_criterion(&h, &cfg));
    }

    #[test]
    fn wide_covariance_fails_cv_clause() {
        let cfg = ConvergenceConfig::default();
        let h: Vec<_> = (0..=96).map(|k| sample(k as f64 * 15.0, 100.0, 36.0)).collect();
        assert!(!convergence_criterion(&h, &cfg));
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let cfg = ScenarioConfig { duration: 0.0, ..ScenarioConfig::default() };
        let r = run_scenario(&cfg).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.metrics.energy, 0.0);
        assert_eq!(r.metrics.discomfort, 0.0);
        assert_eq!(r.status, RunStatus::Completed);
    }
}
