//! Experiment selectors: turn a candidate into a short set-point modification,
//! or decline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::mpc::Condensed;
use crate::control::{MpcProblem, MpcSolution};
use crate::error::{contract, Error, Result};
use crate::excitation::generator::{ExcitationCandidate, GeneratorMethod};
use crate::network::{DiscreteDynamics, ThermalNetwork};
use crate::solver::{solve, ConeProgram, SolveStatus, SparseRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    /// Second-largest over largest node weight at or above which two nodes are
    /// excited against each other.
    pub pair_ratio: f64,
    /// Extra predicted separation (°F) the heuristic needs before acting.
    pub heuristic_gain: f64,
    pub heuristic_steps: usize,
    /// Modified lower bounds stay this far below the upper bound.
    pub margin: f64,
    /// Control effort allowed relative to the unexcited plan.
    pub budget: f64,
    /// Steps over which the optimal selector modifies bounds.
    pub short_horizon: usize,
    pub threshold: f64,
    /// Threshold multiplier per control step without a selection.
    pub decay: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            pair_ratio: 0.75,
            heuristic_gain: 0.5,
            heuristic_steps: 4,
            margin: 2.0,
            budget: 1.1,
            short_horizon: 8,
            threshold: 1.0,
            decay: 0.995,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_ratio > 0.0 && self.pair_ratio <= 1.0) {
            return Err(Error::Config("pair_ratio must be in (0, 1]".into()));
        }
        if self.heuristic_steps == 0 || self.short_horizon == 0 {
            return Err(Error::Config("experiment lengths must be at least one step".into()));
        }
        if !(self.threshold > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("threshold must be positive and decay in (0, 1]".into()));
        }
        if !(self.budget >= 0.0) || !(self.margin >= 0.0) || !(self.heuristic_gain >= 0.0) {
            return Err(Error::Config("budget, margin and heuristic_gain must be non-negative".into()));
        }
        Ok(())
    }
}

/// Trigger threshold of the optimal selector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    pub threshold: f64,
    initial: f64,
    decay: f64,
}

impl SelectorState {
    pub fn new(config: &SelectorConfig) -> Self {
        Self { threshold: config.threshold, initial: config.threshold, decay: config.decay }
    }

    /// A control step passed without a selection.
    pub fn decay(&mut self) {
        self.threshold *= self.decay;
    }

    pub fn reset(&mut self) {
        self.threshold = self.initial;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Heuristic,
    Optimal,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Heuristic => "heuristic",
            SelectorKind::Optimal => "optimal",
        }
    }
}

/// Nodes whose temperature difference an experiment should grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Pair(usize, usize),
    /// One node against every other node.
    Single(usize),
}

impl Target {
    pub fn label(&self, topology: &ThermalNetwork) -> String {
        let name = |i: usize| topology.nodes()[i].name.as_str();
        match *self {
            Target::Pair(i, j) => format!("{}-{}", name(i), name(j)),
            Target::Single(i) => format!("{}-all", name(i)),
        }
    }

    fn terms(&self, node_count: usize) -> Vec<(usize, usize)> {
        match *self {
            Target::Pair(i, j) => vec![(i, j)],
            Target::Single(i) => (0..node_count).filter(|&j| j != i).map(|j| (i, j)).collect(),
        }
    }

    fn nodes(&self) -> Vec<usize> {
        match *self {
            Target::Pair(i, j) => vec![i, j],
            Target::Single(i) => vec![i],
        }
    }
}

/// `Σ |T_a − T_b|` over the target's node pairs at one instant (all nodes).
pub fn separation(target: &Target, temps: &DVector<f64>) -> f64 {
    target.terms(temps.len()).iter().map(|&(a, b)| (temps[a] - temps[b]).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub target: Target,
    pub kind: SelectorKind,
    pub source: GeneratorMethod,
    pub start: f64,
    pub steps: usize,
    /// Modified lower bounds, internal nodes × `steps`.
    pub lower: DMatrix<f64>,
    /// Controls driven harder than in the unexcited plan.
    pub heated: Vec<usize>,
    pub predicted_gain: f64,
    pub predicted_effort: f64,
    pub baseline_effort: f64,
}

/// Pick the node set from a candidate: the two heaviest nodes if their
/// weights are within `pair_ratio`, else the heaviest against all. An external
/// node cannot be heated, so it is paired with its heaviest internal neighbour.
pub fn choose_target(candidate: &ExcitationCandidate, topology: &ThermalNetwork, pair_ratio: f64) -> Option<Target> {
    let w = &candidate.node_weights;
    let ranked = candidate.ranked_nodes();
    let i = *ranked.first()?;
    if !(w[i].abs() > 0.0) {
        return None;
    }
    if topology.is_external(i) {
        let nb = topology
            .neighbors(i)
            .filter(|&j| !topology.is_external(j))
            .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(b.cmp(&a)))?;
        return Some(Target::Pair(nb, i));
    }
    match ranked.get(1) {
        Some(&j) if w[j].abs() >= pair_ratio * w[i].abs() => Some(Target::Pair(i, j)),
        _ => Some(Target::Single(i)),
    }
}

fn all_nodes(model: &DiscreteDynamics, internal: &DVector<f64>, ext: f64) -> DVector<f64> {
    let n = model.internal.len() + model.external.len();
    let mut out = DVector::zeros(n);
    for (r, &i) in model.internal.iter().enumerate() {
        out[i] = internal[r];
    }
    for &e in &model.external {
        out[e] = ext;
    }
    out
}

/// Full heat on one of the target's zones for up to `heuristic_steps` steps,
/// stopping once the zone reaches its upper bound less the margin. Emits an
/// experiment when the predicted separation grows by at least
/// `heuristic_gain` over continuing with `baseline_u`.
#[allow(clippy::too_many_arguments)]
pub fn select_heuristic(
    candidate: &ExcitationCandidate,
    topology: &ThermalNetwork,
    model: &DiscreteDynamics,
    temps: &DVector<f64>,
    baseline_u: &DVector<f64>,
    forecast: &[f64],
    r_min: &DMatrix<f64>,
    r_max: &DMatrix<f64>,
    t: f64,
    config: &SelectorConfig,
) -> Result<Option<Experiment>> {
    let n = model.n_internal();
    let steps = config.heuristic_steps;
    if forecast.len() < steps
        || r_min.ncols() < steps
        || r_max.ncols() < steps
        || r_min.nrows() != n
        || r_max.nrows() != n
    {
        return Err(contract(format!("heuristic selector needs {steps} steps of forecast and bounds for {n} zones")));
    }
    let Some(target) = choose_target(candidate, topology, config.pair_ratio) else {
        return Ok(None);
    };
    let zone_map = topology.layout().zone_map().to_vec();
    let mut best: Option<(f64, usize, Vec<usize>, usize, f64)> = None;
    for node in target.nodes() {
        let Some(row) = model.internal.iter().position(|&x| x == node) else { continue };
        let controls: Vec<usize> = (0..zone_map.len()).filter(|&l| zone_map[l] == node).collect();
        if controls.is_empty() || temps[row] >= r_max[(row, 0)] - config.margin {
            continue;
        }
        let mut u_exc = baseline_u.clone();
        for &l in &controls {
            u_exc[l] = 1.0;
        }
        let (mut tb, mut te) = (temps.clone(), temps.clone());
        let mut k_end = 0;
        for k in 0..steps {
            let ext = DVector::from_element(model.n_external(), forecast[k]);
            tb = model.step(&tb, &ext, baseline_u);
            te = model.step(&te, &ext, &u_exc);
            k_end = k + 1;
            if te[row] >= r_max[(row, k)] - config.margin {
                break;
            }
        }
        let ext = forecast[k_end - 1];
        let gain = separation(&target, &all_nodes(model, &te, ext)) - separation(&target, &all_nodes(model, &tb, ext));
        if best.as_ref().is_none_or(|b| gain > b.0) {
            best = Some((gain, row, controls, k_end, u_exc.sum()));
        }
    }
    let Some((gain, row, controls, k_end, effort)) = best else {
        return Ok(None);
    };
    if gain < config.heuristic_gain {
        return Ok(None);
    }
    let mut lower = r_min.columns(0, k_end).into_owned();
    for k in 0..k_end {
        lower[(row, k)] = (r_max[(row, k)] - config.margin).max(r_min[(row, k)]);
    }
    Ok(Some(Experiment {
        target,
        kind: SelectorKind::Heuristic,
        source: candidate.source,
        start: t,
        steps: k_end,
        lower,
        predicted_effort: effort * k_end as f64,
        baseline_effort: baseline_u.sum() * k_end as f64,
        heated: controls,
        predicted_gain: gain,
    }))
}

/// Outcome of the optimal selector for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSelection {
    pub experiment: Option<Experiment>,
    pub target: Option<Target>,
    /// Excited minus baseline separation objective.
    pub gain: f64,
    pub baseline_separation: f64,
    pub excited_separation: f64,
    /// Control sequence of the better subproblem, when one solved.
    pub u: Option<DMatrix<f64>>,
    pub effort: f64,
    pub baseline_effort: f64,
    /// Why no experiment was possible, when the subproblems were skipped or failed.
    pub diagnostic: Option<String>,
}

impl OptimalSelection {
    fn declined(target: Option<Target>, baseline_effort: f64, diagnostic: impl Into<String>) -> Self {
        Self {
            experiment: None,
            target,
            gain: 0.0,
            baseline_separation: 0.0,
            excited_separation: 0.0,
            u: None,
            effort: baseline_effort,
            baseline_effort,
            diagnostic: Some(diagnostic.into()),
        }
    }
}

/// Separation objective over the first `hs` predicted steps, averaged over zones.
fn objective(problem: &MpcProblem, target: &Target, temps: &DMatrix<f64>, hs: usize) -> f64 {
    let n = temps.nrows();
    (0..hs)
        .map(|k| separation(target, &all_nodes(&problem.model, &temps.column(k).into_owned(), problem.forecast[k])))
        .sum::<f64>()
        / n as f64
}

/// Maximise `sign · Σ_k Σ (T_a − T_b)` subject to the dynamics, saturation,
/// hard comfort bounds and the effort budget.
fn directional_lp(
    problem: &MpcProblem,
    cond: &Condensed,
    target: &Target,
    sign: f64,
    budget: f64,
    hs: usize,
) -> Option<DMatrix<f64>> {
    let (n, m, h) = (problem.model.n_internal(), problem.model.n_controls(), problem.horizon());
    let nu = m * h;
    let node_count = problem.model.internal.len() + problem.model.external.len();
    let row_of = |node: usize| problem.model.internal.iter().position(|&x| x == node);
    let mut c = vec![0.0; nu];
    for k in 0..hs {
        for (a, b) in target.terms(node_count) {
            for (node, s) in [(a, 1.0), (b, -1.0)] {
                if let Some(r) = row_of(node) {
                    for (j, v) in cond.row(r, k, 1.0) {
                        c[j] -= sign * s * v;
                    }
                }
            }
        }
    }
    let mut g: Vec<SparseRow> = Vec::new();
    let mut hv = Vec::new();
    for j in 0..nu {
        g.push(vec![(j, 1.0)]);
        hv.push(1.0);
        g.push(vec![(j, -1.0)]);
        hv.push(0.0);
    }
    for k in 0..h {
        for i in 0..n {
            g.push(cond.row(i, k, -1.0));
            hv.push(cond.free[(i, k)] - problem.r_min[(i, k)]);
            g.push(cond.row(i, k, 1.0));
            hv.push(problem.r_max[(i, k)] - cond.free[(i, k)]);
        }
    }
    g.push((0..nu).map(|j| (j, 1.0)).collect());
    hv.push(budget);
    let nonneg = g.len();
    let prog = ConeProgram { c, g, h: hv, nonneg, soc: vec![] };
    let sol = solve(&prog, &problem.config.solver_settings()).ok()?;
    (sol.status == SolveStatus::Optimal).then(|| DMatrix::from_fn(m, h, |l, k| sol.x[k * m + l].clamp(0.0, 1.0)))
}

/// Maximise the target's separation over the first `short_horizon` steps by
/// choosing raised lower bounds `e`, under hard comfort bounds and an effort
/// budget of `budget × Σu_baseline`. The absolute-value objective is split
/// into its two sign-fixed linear programs and the better one kept. An
/// experiment is emitted when the gain over the baseline plan exceeds the
/// current threshold and the bounds actually change.
pub fn select_optimal(
    candidate: &ExcitationCandidate,
    topology: &ThermalNetwork,
    problem: &MpcProblem,
    baseline: &MpcSolution,
    t: f64,
    state: &SelectorState,
    config: &SelectorConfig,
) -> Result<OptimalSelection> {
    let hs = config.short_horizon;
    let h = problem.horizon();
    if h < 4 * hs {
        return Err(contract(format!("control horizon {h} must be at least four times the experiment length {hs}")));
    }
    if baseline.u.shape() != (problem.model.n_controls(), h) {
        return Err(contract("baseline solution does not match the problem"));
    }
    let baseline_effort = baseline.u.sum();
    let target = choose_target(candidate, topology, config.pair_ratio);
    let Some(tg) = target else {
        return Ok(OptimalSelection::declined(None, baseline_effort, "candidate carries no node weight"));
    };
    let n = problem.model.n_internal();
    for k in 0..hs {
        for i in 0..n {
            if problem.r_max[(i, k)] - config.margin < problem.r_min[(i, k)] - 1e-12 {
                return Ok(OptimalSelection::declined(
                    target,
                    baseline_effort,
                    "bounds leave no room for a raised lower bound",
                ));
            }
        }
    }
    if baseline.w.amax() > 1e-6 {
        return Ok(OptimalSelection::declined(target, baseline_effort, "baseline plan violates the comfort bounds"));
    }
    let budget = config.budget * baseline_effort;
    if budget <= 1e-9 {
        return Ok(OptimalSelection::declined(target, baseline_effort, "no control effort available"));
    }
    let cond = Condensed::new(problem);
    let base_sep = objective(problem, &tg, &baseline.t_pred, hs);
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for sign in [1.0, -1.0] {
        if let Some(u) = directional_lp(problem, &cond, &tg, sign, budget, hs) {
            let temps = problem.simulate(&u);
            let j = objective(problem, &tg, &temps, hs);
            if best.as_ref().is_none_or(|b| j > b.0) {
                best = Some((j, u, temps));
            }
        }
    }
    let Some((j, u, temps)) = best else {
        return Ok(OptimalSelection::declined(
            target,
            baseline_effort,
            "both separation subproblems failed to converge",
        ));
    };
    let gain = j - base_sep;
    let effort = u.sum();
    let lower = DMatrix::from_fn(n, hs, |i, k| {
        temps[(i, k)].min(problem.r_max[(i, k)] - config.margin).max(problem.r_min[(i, k)])
    });
    let raised = (&lower - problem.r_min.columns(0, hs)).amax() > 1e-6;
    let experiment = (gain > state.threshold && raised).then(|| {
        let heated = (0..u.nrows()).filter(|&l| (0..hs).any(|k| u[(l, k)] > baseline.u[(l, k)] + 1e-6)).collect();
        Experiment {
            target: tg,
            kind: SelectorKind::Optimal,
            source: candidate.source,
            start: t,
            steps: hs,
            lower: lower.clone(),
            heated,
            predicted_gain: gain,
            predicted_effort: effort,
            baseline_effort,
        }
    });
    Ok(OptimalSelection {
        experiment,
        target,
        gain,
        baseline_separation: base_sep,
        excited_separation: j,
        u: Some(u),
        effort,
        baseline_effort,
        diagnostic: None,
    })
}
