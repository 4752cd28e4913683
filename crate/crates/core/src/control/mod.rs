//! Heating controllers.

pub mod mpc;
pub mod thermostat;

pub use mpc::{build_mpc_problem, horizon_bounds, mpc_step, solve_mpc, MpcConfig, MpcProblem, MpcSolution};
pub use thermostat::{active_lower_bounds, compute_preheat, thermostat_control, ThermostatConfig, ThermostatState};
