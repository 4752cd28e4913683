//! Energy sensitivity to parameters by sampling the estimate distribution and
//! running short closed-loop MPC simulations per sample.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{build_mpc_problem, horizon_bounds, solve_mpc, MpcConfig};
use crate::error::{contract, Error, Result};
use crate::excitation::generator::{candidates_from_scores, ExcitationCandidate, GeneratorMethod};
use crate::linalg::psd_cholesky;
use crate::network::{discrete_model, ParameterVector, ThermalNetwork};
use crate::rng::{stream, TAG_MONTE_CARLO};
use crate::simulator::{weather_forecast, OccupancySchedule, WeatherModel};

const MAX_DRAWS_PER_SAMPLE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    /// Closed-loop control steps simulated per sample.
    pub steps: usize,
    pub mpc: MpcConfig,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { n_samples: 32, steps: 16, mpc: MpcConfig { horizon: 32, ..MpcConfig::default() }, seed: 0 }
    }
}

/// Where the short simulations start.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloScenario {
    /// Internal node temperatures.
    pub temps: DVector<f64>,
    pub start: f64,
    pub schedule: OccupancySchedule,
    pub weather: WeatherModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    /// `p` labels then `q` labels.
    pub labels: Vec<String>,
    /// `∂E/∂θ_k` from a simple regression of energy on each parameter.
    pub slopes: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Sample standard deviation of each parameter.
    pub spreads: Vec<f64>,
    pub energies: Vec<f64>,
    /// Draws rejected for a non-positive parameter.
    pub resampled: usize,
    /// No parameter varied across samples, so no slope is defined.
    pub zero_information: bool,
}

impl MonteCarloEstimate {
    /// Candidates over the RC products scored by the energy spread each
    /// parameter's uncertainty induces, `|∂E/∂p_k|·sd(p_k)`.
    pub fn candidates(&self, topology: &ThermalNetwork) -> Vec<ExcitationCandidate> {
        let np = topology.layout().p_len();
        let scores: Vec<f64> = (0..np).map(|k| (self.slopes[k] * self.spreads[k]).abs()).collect();
        candidates_from_scores(&scores, topology, GeneratorMethod::MonteCarlo)
    }
}

fn draw(mean: &DVector<f64>, chol: &DMatrix<f64>, np: usize, seed: u64, index: usize) -> Result<(DVector<f64>, usize)> {
    let mut rng = stream(seed, TAG_MONTE_CARLO, index as u64);
    for attempt in 0..MAX_DRAWS_PER_SAMPLE {
        let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(&mut rng));
        let x = mean + chol * z;
        if x.iter().take(np).all(|&v| v > 0.0) && x.iter().skip(np).all(|&v| v >= 0.0) {
            return Ok((x, attempt));
        }
    }
    Err(Error::Degenerate(format!(
        "no physical draw for Monte Carlo sample {index} in {MAX_DRAWS_PER_SAMPLE} attempts"
    )))
}

fn closed_loop_energy(
    params: &ParameterVector,
    topology: &ThermalNetwork,
    scenario: &MonteCarloScenario,
    config: &MonteCarloConfig,
) -> Result<f64> {
    let mpc = &config.mpc;
    let model = discrete_model(params, topology, mpc.dt)?;
    let n = model.n_internal();
    let mut temps = scenario.temps.clone();
    let mut energy = 0.0;
    for s in 0..config.steps {
        let t = scenario.start + s as f64 * mpc.dt;
        let forecast = weather_forecast(&scenario.weather, t, mpc.horizon, mpc.dt);
        let (lo, hi) = horizon_bounds(&scenario.schedule, t, n, mpc.horizon, mpc.dt);
        let problem = build_mpc_problem(&model, &temps, &forecast, &lo, &hi, mpc)?;
        let u = solve_mpc(&problem)?.u.column(0).map(|v| v.clamp(0.0, 1.0));
        energy += u.sum();
        let ext = DVector::from_element(model.n_external(), forecast[0]);
        temps = model.step(&temps, &ext, &u);
    }
    Ok(energy)
}

fn regress(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sd = (sxx / (n - 1.0)).sqrt();
    if !(sxx > 1e-24 * mx.abs().max(1.0).powi(2)) {
        return (0.0, f64::INFINITY, 0.0, 0.0);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    let t = if se > 0.0 {
        slope / se
    } else if slope == 0.0 {
        0.0
    } else {
        slope.signum() * f64::INFINITY
    };
    (slope, se, t, sd)
}

/// Sample parameters from `N(θ̂, Σ)` (truncated to physical values), run a
/// short closed-loop MPC simulation per sample and regress total energy on
/// each parameter. `covariance` covers `p` then `q`.
pub fn generate_montecarlo(
    params: &ParameterVector,
    covariance: &DMatrix<f64>,
    topology: &ThermalNetwork,
    scenario: &MonteCarloScenario,
    config: &MonteCarloConfig,
) -> Result<MonteCarloEstimate> {
    if config.n_samples < 2 {
        return Err(contract("Monte Carlo needs at least two samples"));
    }
    config.mpc.validate()?;
    let mean = params.stacked();
    let dim = mean.len();
    if covariance.shape() != (dim, dim) {
        return Err(contract(format!("covariance is {:?}, expected {dim}×{dim}", covariance.shape())));
    }
    let np = params.p.len();
    let chol = psd_cholesky(covariance)?;
    let draws = (0..config.n_samples).map(|i| draw(&mean, &chol, np, config.seed, i)).collect::<Result<Vec<_>>>()?;
    let resampled = draws.iter().map(|(_, r)| r).sum();
    let energies = draws
        .par_iter()
        .map(|(x, _)| {
            let sample = params.with_values(x.rows(0, np).into_owned(), x.rows(np, dim - np).into_owned());
            closed_loop_energy(&sample, topology, scenario, config)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut est = MonteCarloEstimate {
        labels: params.layout().labels(),
        slopes: Vec::with_capacity(dim),
        std_errors: Vec::with_capacity(dim),
        t_stats: Vec::with_capacity(dim),
        spreads: Vec::with_capacity(dim),
        energies,
        resampled,
        zero_information: true,
    };
    for k in 0..dim {
        let xs: Vec<f64> = draws.iter().map(|(x, _)| x[k]).collect();
        let (slope, se, t, sd) = regress(&xs, &est.energies);
        if sd > 0.0 {
            est.zero_information = false;
        }
        est.slopes.push(slope);
        est.std_errors.push(se);
        est.t_stats.push(t);
        est.spreads.push(sd);
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.1, 6.9, 9.0];
        let (slope, se, t, _) = regress(&x, &y);
        assert!((slope - 1.98).abs() < 1e-12);
        assert!(se > 0.0 && t > 10.0);
    }

    #[test]
    fn constant_regressor_has_no_slope() {
        let (slope, se, t, sd) = regress(&[2.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!((slope, t, sd), (0.0, 0.0, 0.0));
        assert!(se.is_infinite());
    }
}
