//! Soft-constrained model predictive control.
//!
//! The problem is condensed onto the inputs: temperatures are affine in
//! `u`, `T(k) = T_free(k) + Σ_{j<k} Φ^{k-1-j} Γ_ctrl u(j)`. The two root-mean-square
//! terms become epigraph variables `t₁ ≥ ‖w‖/√(nh)` and
//! `t₂ ≥ ‖T(h) − r(h)‖/√n`, giving a second-order cone program in
//! `x = [u; w; t₁; t₂]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::network::{discrete_model, DiscreteDynamics, ParameterVector, ThermalNetwork};
use crate::simulator::{comfort_bounds, weather_forecast, OccupancySchedule, WeatherModel};
use crate::solver::{solve, ConeProgram, SolveStatus, SolverSettings, SparseRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Weight of the RMS comfort slack.
    pub q: f64,
    /// Price of one step of full heat.
    pub r: f64,
    /// Weight of the RMS terminal deviation from the band midpoint.
    pub q_togo: f64,
    pub dt: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { horizon: 96, q: 10.0, r: 1.0, q_togo: 1.0, dt: 15.0, max_iter: 60, tolerance: 1e-8 }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("MPC horizon must be at least 1".into()));
        }
        if [self.q, self.r, self.q_togo].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("MPC weights must be finite and non-negative".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("MPC step must be positive".into()));
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            max_iter: self.max_iter,
            abstol: self.tolerance,
            reltol: self.tolerance,
            feastol: self.tolerance,
            ..SolverSettings::default()
        }
    }
}

/// Fully numeric instance. Column `k` of the bound matrices applies to `T(k+1)`;
/// `forecast[k]` is the external temperature held over step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub model: DiscreteDynamics,
    pub t0: DVector<f64>,
    pub forecast: Vec<f64>,
    pub r_min: DMatrix<f64>,
    pub r_max: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub config: MpcConfig,
}

impl MpcProblem {
    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }

    /// Temperatures over the horizon under the input sequence `u` (m×h);
    /// column `k` is `T(k+1)`.
    pub fn simulate(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, h) = (self.model.n_internal(), self.horizon());
        let mut out = DMatrix::zeros(n, h);
        let mut t = self.t0.clone();
        for k in 0..h {
            let ext = DVector::from_element(self.model.n_external(), self.forecast[k]);
            t = self.model.step(&t, &ext, &u.column(k).into_owned());
            out.set_column(k, &t);
        }
        out
    }

    /// Cost of a control sequence with the slack it implies.
    pub fn cost_of(&self, u: &DMatrix<f64>) -> f64 {
        let temps = self.simulate(u);
        let (n, h) = (temps.nrows(), temps.ncols());
        let mut slack2 = 0.0;
        for k in 0..h {
            for i in 0..n {
                let w = (self.r_min[(i, k)] - temps[(i, k)]).max(temps[(i, k)] - self.r_max[(i, k)]).max(0.0);
                slack2 += w * w;
            }
        }
        let term: f64 = (0..n).map(|i| (temps[(i, h - 1)] - self.r[(i, h - 1)]).powi(2)).sum();
        self.config.q * (slack2 / (n * h) as f64).sqrt()
            + self.config.r * u.sum()
            + self.config.q_togo * (term / n as f64).sqrt()
    }
}

pub fn build_mpc_problem(
    model: &DiscreteDynamics,
    t0: &DVector<f64>,
    forecast: &[f64],
    r_min: &DMatrix<f64>,
    r_max: &DMatrix<f64>,
    config: &MpcConfig,
) -> Result<MpcProblem> {
    let n = model.n_internal();
    let h = config.horizon;
    if t0.len() != n {
        return Err(contract(format!("T(0) has {} entries for {n} internal nodes", t0.len())));
    }
    if forecast.len() != h {
        return Err(contract(format!("forecast has {} entries for horizon {h}", forecast.len())));
    }
    if r_min.shape() != (n, h) || r_max.shape() != (n, h) {
        return Err(contract(format!("bounds must be {n}×{h}")));
    }
    if r_min.iter().zip(r_max.iter()).any(|(lo, hi)| lo > hi) {
        return Err(contract("r_min exceeds r_max"));
    }
    let r = (r_min + r_max) * 0.5;
    Ok(MpcProblem {
        model: model.clone(),
        t0: t0.clone(),
        forecast: forecast.to_vec(),
        r_min: r_min.clone(),
        r_max: r_max.clone(),
        r,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// m×h
    pub u: DMatrix<f64>,
    /// n×h, column `k` is `T(k+1)`
    pub t_pred: DMatrix<f64>,
    /// n×h
    pub w: DMatrix<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Prediction matrices of the condensed dynamics.
pub(crate) struct Condensed {
    /// n×h free response (u = 0)
    pub free: DMatrix<f64>,
    /// `blocks[d] = Φ^d Γ_ctrl`, n×m
    pub blocks: Vec<DMatrix<f64>>,
}

impl Condensed {
    pub fn new(p: &MpcProblem) -> Self {
        let h = p.horizon();
        let m = p.model.n_controls();
        let free = p.simulate(&DMatrix::zeros(m, h));
        let mut blocks = Vec::with_capacity(h);
        let mut b = p.model.gamma_ctrl.clone();
        for _ in 0..h {
            blocks.push(b.clone());
            b = &p.model.phi * b;
        }
        Self { free, blocks }
    }

    /// Sparse row of `∂T_i(k+1)/∂u`, scaled by `sign`, with `u(j, l)` at column `j·m + l`.
    pub fn row(&self, i: usize, k: usize, sign: f64) -> SparseRow {
        let m = self.blocks[0].ncols();
        let mut row = Vec::with_capacity((k + 1) * m);
        for j in 0..=k {
            let blk = &self.blocks[k - j];
            for l in 0..m {
                let v = blk[(i, l)];
                if v != 0.0 {
                    row.push((j * m + l, sign * v));
                }
            }
        }
        row
    }
}

pub fn solve_mpc(problem: &MpcProblem) -> Result<MpcSolution> {
    let cfg = &problem.config;
    let (n, m, h) = (problem.model.n_internal(), problem.model.n_controls(), problem.horizon());
    let nu = m * h;
    let soft = cfg.q > 0.0;
    let togo = cfg.q_togo > 0.0;
    let nw = if soft { n * h } else { 0 };
    let t1 = nu + nw;
    let t2 = t1 + usize::from(soft);
    let nvar = t2 + usize::from(togo);
    let cond = Condensed::new(problem);

    let mut c = vec![0.0; nvar];
    c[..nu].fill(cfg.r);
    if soft {
        c[t1] = cfg.q;
    }
    if togo {
        c[t2] = cfg.q_togo;
    }
    let mut g: Vec<SparseRow> = Vec::new();
    let mut hv: Vec<f64> = Vec::new();
    for j in 0..nu {
        g.push(vec![(j, 1.0)]);
        hv.push(1.0);
        g.push(vec![(j, -1.0)]);
        hv.push(0.0);
    }
    if soft {
        for k in 0..h {
            for i in 0..n {
                let wi = nu + k * n + i;
                g.push(vec![(wi, -1.0)]);
                hv.push(0.0);
                // −S u − w ≤ T_free − r_min
                let mut lo = cond.row(i, k, -1.0);
                lo.push((wi, -1.0));
                g.push(lo);
                hv.push(cond.free[(i, k)] - problem.r_min[(i, k)]);
                // S u − w ≤ r_max − T_free
                let mut hi = cond.row(i, k, 1.0);
                hi.push((wi, -1.0));
                g.push(hi);
                hv.push(problem.r_max[(i, k)] - cond.free[(i, k)]);
            }
        }
    }
    let nonneg = g.len();
    let mut soc = Vec::new();
    if soft {
        let scale = 1.0 / ((n * h) as f64).sqrt();
        g.push(vec![(t1, -1.0)]);
        hv.push(0.0);
        for wi in nu..nu + nw {
            g.push(vec![(wi, -scale)]);
            hv.push(0.0);
        }
        soc.push(1 + nw);
    }
    if togo {
        let scale = 1.0 / (n as f64).sqrt();
        g.push(vec![(t2, -1.0)]);
        hv.push(0.0);
        for i in 0..n {
            g.push(cond.row(i, h - 1, -scale));
            hv.push(scale * (cond.free[(i, h - 1)] - problem.r[(i, h - 1)]));
        }
        soc.push(1 + n);
    }
    let prog = ConeProgram { c, g, h: hv, nonneg, soc };
    let sol = solve(&prog, &cfg.solver_settings()).map_err(Error::Degenerate)?;
    if sol.x.iter().any(|v| !v.is_finite()) {
        return Ok(MpcSolution {
            u: DMatrix::zeros(m, h),
            t_pred: problem.simulate(&DMatrix::zeros(m, h)),
            w: DMatrix::zeros(n, h),
            cost: f64::NAN,
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: sol.gap,
        });
    }
    let u = DMatrix::from_fn(m, h, |l, k| sol.x[k * m + l]);
    let t_pred = problem.simulate(&u);
    // Given u the smallest feasible slack is optimal. The interior-point
    // iterate only approaches it at the rate of the gap when w sits at the
    // apex of its cone, so report the exact value.
    let w = DMatrix::from_fn(n, h, |i, k| {
        (problem.r_min[(i, k)] - t_pred[(i, k)]).max(t_pred[(i, k)] - problem.r_max[(i, k)]).max(0.0)
    });
    let cost = problem.cost_of(&u);
    Ok(MpcSolution {
        u,
        t_pred,
        w,
        cost,
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
    })
}

/// Per-zone bounds for `T(1) … T(h)` starting from time `t`.
pub fn horizon_bounds(sched: &OccupancySchedule, t: f64, n: usize, h: usize, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut lo = DMatrix::zeros(n, h);
    let mut hi = DMatrix::zeros(n, h);
    for k in 0..h {
        let (a, b) = comfort_bounds(sched, t + (k + 1) as f64 * dt, n);
        for i in 0..n {
            lo[(i, k)] = a[i];
            hi[(i, k)] = b[i];
        }
    }
    (lo, hi)
}

/// Receding-horizon step: build and solve from the current temperatures and
/// forecast, and return the first input clipped to `[0, 1]` with the full solution.
pub fn mpc_step(
    params: &ParameterVector,
    topology: &ThermalNetwork,
    t0: &DVector<f64>,
    t: f64,
    sched: &OccupancySchedule,
    weather: &WeatherModel,
    config: &MpcConfig,
) -> Result<(DVector<f64>, MpcSolution)> {
    let model = discrete_model(params, topology, config.dt)?;
    let h = config.horizon;
    let forecast = weather_forecast(weather, t, h, config.dt);
    let (lo, hi) = horizon_bounds(sched, t, model.n_internal(), h, config.dt);
    let problem = build_mpc_problem(&model, t0, &forecast, &lo, &hi, config)?;
    let sol = solve_mpc(&problem)?;
    let u0 = sol.u.column(0).map(|v| v.clamp(0.0, 1.0));
    Ok((u0, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::minimal_parameterization;

    fn two_zone_model() -> DiscreteDynamics {
        let net = ThermalNetwork::two_zone();
        discrete_model(&minimal_parameterization(&net), &net, 15.0).unwrap()
    }

    fn problem(t0: [f64; 2], ext: f64, h: usize, lo: f64, hi: f64) -> MpcProblem {
        let cfg = MpcConfig { horizon: h, ..MpcConfig::default() };
        build_mpc_problem(
            &two_zone_model(),
            &DVector::from_column_slice(&t0),
            &vec![ext; h],
            &DMatrix::from_element(2, h, lo),
            &DMatrix::from_element(2, h, hi),
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn midpoint_and_shapes() {
        let p = problem([70.0, 70.0], 50.0, 1, 68.0, 72.0);
        assert_eq!(p.forecast.len(), 1);
        assert_eq!(p.r[(0, 0)], 70.0);
        let bad = build_mpc_problem(&p.model, &p.t0, &[1.0, 2.0], &p.r_min, &p.r_max, &p.config);
        assert!(bad.is_err());
    }

    #[test]
    fn warm_day_needs_no_heat() {
        // at 70 with 70 outside the free response stays centred
        let p = problem([70.0, 70.0], 70.0, 8, 68.0, 72.0);
        let sol = solve_mpc(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.u.amax() < 1e-6);
        assert!(sol.cost.abs() < 1e-6);
    }

    #[test]
    fn cold_start_applies_full_heat() {
        let p = problem([50.0, 50.0], 20.0, 8, 68.0, 72.0);
        let sol = solve_mpc(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        for l in 0..2 {
            assert!(sol.u[(l, 0)] > 1.0 - 1e-6);
        }
        assert!(sol.w.amax() > 1.0);
    }

    #[test]
    fn dynamics_and_constraints_hold() {
        let p = problem([66.0, 71.0], 30.0, 12, 68.0, 72.0);
        let sol = solve_mpc(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.u.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)));
        assert!(sol.w.iter().all(|&v| v >= -1e-6));
        let mut t = p.t0.clone();
        for k in 0..12 {
            let ext = DVector::from_element(1, 30.0);
            let next = p.model.step(&t, &ext, &sol.u.column(k).into_owned());
            assert!((&next - sol.t_pred.column(k)).amax() < 1e-6);
            for i in 0..2 {
                assert!(sol.t_pred[(i, k)] + sol.w[(i, k)] >= 68.0 - 1e-6);
                assert!(sol.t_pred[(i, k)] - sol.w[(i, k)] <= 72.0 + 1e-6);
            }
            t = next;
        }
        assert!((p.cost_of(&sol.u) - sol.cost).abs() < 1e-5);
    }

    #[test]
    fn no_soft_terms_still_solves() {
        let mut p = problem([66.0, 66.0], 30.0, 4, 68.0, 72.0);
        p.config.q = 0.0;
        let sol = solve_mpc(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        p.config.q_togo = 0.0;
        let sol = solve_mpc(&p).unwrap();
        assert!(sol.u.amax() < 1e-6);
    }
}
