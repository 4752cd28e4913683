//! Baseline bang-bang thermostat with preheat and a hysteresis timer.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::network::{DiscreteDynamics, ThermalNetwork};
use crate::simulator::OccupancySchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermostatConfig {
    /// Minutes each heated zone switches to its occupied bounds early.
    /// Empty means "size it with [`compute_preheat`]".
    pub preheat: Vec<f64>,
    /// Minimum minutes between two switch events of one zone.
    pub hysteresis: f64,
    /// A heater that is on stays on until the zone is this far above its lower bound.
    pub deadband: f64,
    /// Outside temperature used to size the preheat.
    pub design_ext_temp: f64,
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        Self { preheat: Vec::new(), hysteresis: 15.0, deadband: 1.0, design_ext_temp: 32.0 }
    }
}

impl ThermostatConfig {
    pub fn validate(&self, control_step: f64) -> Result<()> {
        if self.hysteresis < control_step {
            return Err(Error::Config(format!(
                "hysteresis {} is shorter than the control step {control_step}",
                self.hysteresis
            )));
        }
        if self.preheat.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("preheat durations must be non-negative".into()));
        }
        if !(self.deadband >= 0.0) {
            return Err(Error::Config("deadband must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per heated zone: heater on/off and time of the last switch.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermostatState {
    pub on: Vec<bool>,
    pub last_switch: Vec<f64>,
}

impl ThermostatState {
    pub fn new(zones: usize) -> Self {
        Self { on: vec![false; zones], last_switch: vec![f64::NEG_INFINITY; zones] }
    }
}

/// Minutes of full heat needed to bring each heated zone from the unoccupied
/// to the occupied lower bound with the outside held at `design_ext_temp`,
/// rounded up to whole steps of `model.dt`. Unheated internal nodes get 0.
pub fn compute_preheat(
    model: &DiscreteDynamics,
    network: &ThermalNetwork,
    sched: &OccupancySchedule,
    design_ext_temp: f64,
) -> Result<Vec<f64>> {
    let ni = model.n_internal();
    let (start, target) = (sched.unoccupied.0, sched.occupied.0);
    let heated = network.heated_nodes();
    let rows: Vec<usize> = heated
        .iter()
        .map(|&node| model.internal.iter().position(|&i| i == node).expect("heated nodes are internal"))
        .collect();
    if start >= target {
        return Ok(vec![0.0; heated.len()]);
    }
    let t_ext = DVector::from_element(model.n_external(), design_ext_temp);
    let u = DVector::from_element(model.n_controls(), 1.0);
    // steady state under full heat decides reachability
    let id = nalgebra::DMatrix::<f64>::identity(ni, ni);
    let forcing = &model.gamma_ext * &t_ext + &model.gamma_ctrl * &u;
    let steady = (id - &model.phi)
        .lu()
        .solve(&forcing)
        .ok_or_else(|| Error::Degenerate("thermal model has no steady state".into()))?;
    for (&node, &r) in heated.iter().zip(&rows) {
        if steady[r] <= target {
            return Err(Error::Unreachable {
                zone: network.nodes()[node].name.clone(),
                target,
                ext_temp: design_ext_temp,
            });
        }
    }
    let mut temps = DVector::from_element(ni, start);
    let mut reached: Vec<Option<usize>> = vec![None; heated.len()];
    let mut k = 0usize;
    while reached.iter().any(Option::is_none) {
        for (z, &r) in rows.iter().enumerate() {
            if reached[z].is_none() && temps[r] >= target {
                reached[z] = Some(k);
            }
        }
        temps = model.step(&temps, &t_ext, &u);
        k += 1;
        if k > 1_000_000 {
            return Err(Error::Degenerate("preheat sizing did not terminate".into()));
        }
    }
    Ok(reached.into_iter().map(|k| k.unwrap() as f64 * model.dt).collect())
}

/// Lower bound each heated zone's thermostat tracks at time `t`: the occupied
/// bound from `preheat[z]` minutes before occupancy, else the unoccupied one.
pub fn active_lower_bounds(sched: &OccupancySchedule, t: f64, preheat: &[f64]) -> Vec<f64> {
    preheat
        .iter()
        .map(|&p| if sched.is_occupied(t) || sched.is_occupied(t + p) { sched.occupied.0 } else { sched.unoccupied.0 })
        .collect()
}

/// One thermostat decision per heated zone. `temps` and `lower` are per heated
/// zone. Heat turns on below `lower`, off at `lower + deadband`, and a zone
/// that switched less than `hysteresis` minutes ago keeps its output.
pub fn thermostat_control(
    temps: &[f64],
    lower: &[f64],
    t: f64,
    state: &ThermostatState,
    config: &ThermostatConfig,
) -> Result<(DVector<f64>, ThermostatState)> {
    let m = state.on.len();
    if temps.len() != m || lower.len() != m {
        return Err(contract(format!(
            "thermostat has {m} zones, got {} temperatures and {} bounds",
            temps.len(),
            lower.len()
        )));
    }
    let mut next = state.clone();
    for z in 0..m {
        let want = if state.on[z] { temps[z] < lower[z] + config.deadband } else { temps[z] < lower[z] };
        if want != state.on[z] && t - state.last_switch[z] >= config.hysteresis {
            next.on[z] = want;
            next.last_switch[z] = t;
        }
    }
    let u = DVector::from_iterator(m, next.on.iter().map(|&on| if on { 1.0 } else { 0.0 }));
    Ok((u, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{discrete_model, minimal_parameterization};

    fn cfg() -> ThermostatConfig {
        ThermostatConfig::default()
    }

    #[test]
    fn warm_zone_stays_off() {
        let (u, _) = thermostat_control(&[79.0], &[60.0], 100.0, &ThermostatState::new(1), &cfg()).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn cold_zone_turns_on() {
        let state = ThermostatState { on: vec![false], last_switch: vec![0.0] };
        let (u, next) = thermostat_control(&[65.0], &[68.0], 20.0, &state, &cfg()).unwrap();
        assert_eq!(u[0], 1.0);
        assert_eq!(next.last_switch[0], 20.0);
    }

    #[test]
    fn hysteresis_holds_output() {
        let state = ThermostatState { on: vec![true], last_switch: vec![100.0] };
        let (u, next) = thermostat_control(&[75.0], &[68.0], 105.0, &state, &cfg()).unwrap();
        assert_eq!(u[0], 1.0);
        assert_eq!(next, state);
        let (u, _) = thermostat_control(&[75.0], &[68.0], 115.0, &state, &cfg()).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn deadband_keeps_heating() {
        let state = ThermostatState { on: vec![true], last_switch: vec![0.0] };
        let (u, _) = thermostat_control(&[68.5], &[68.0], 60.0, &state, &cfg()).unwrap();
        assert_eq!(u[0], 1.0);
        let (u, _) = thermostat_control(&[69.0], &[68.0], 60.0, &state, &cfg()).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn preheat_activates_occupied_bound_early() {
        let s = OccupancySchedule::default();
        // Monday 07:00 with a 90-minute preheat
        assert_eq!(active_lower_bounds(&s, 420.0, &[90.0, 30.0]), vec![68.0, 60.0]);
    }

    fn model() -> (DiscreteDynamics, ThermalNetwork) {
        let net = ThermalNetwork::two_zone();
        (discrete_model(&minimal_parameterization(&net), &net, 15.0).unwrap(), net)
    }

    #[test]
    fn preheat_two_zone() {
        let (m, net) = model();
        let p = compute_preheat(&m, &net, &OccupancySchedule::default(), 32.0).unwrap();
        // zone 1 reaches 68 after 53.7 min, zone 2 after 42.7 min (fine-step Euler)
        assert_eq!(p, vec![60.0, 45.0]);
    }

    #[test]
    fn preheat_zero_when_already_at_bound() {
        let (m, net) = model();
        let s = OccupancySchedule { unoccupied: (68.0, 80.0), ..OccupancySchedule::default() };
        assert_eq!(compute_preheat(&m, &net, &s, 32.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn stronger_heater_preheats_faster() {
        let (m, net) = model();
        let strong = net.with_heaters(net.heaters().iter().map(|b| 2.0 * b).collect()).unwrap();
        let ms = discrete_model(&minimal_parameterization(&strong), &strong, 15.0).unwrap();
        let s = OccupancySchedule::default();
        let base = compute_preheat(&m, &net, &s, 32.0).unwrap();
        let fast = compute_preheat(&ms, &strong, &s, 32.0).unwrap();
        for z in 0..2 {
            assert!(fast[z] < base[z]);
        }
    }

    #[test]
    fn unreachable_set_point_names_zone() {
        let (m, net) = model();
        match compute_preheat(&m, &net, &OccupancySchedule::default(), -200.0) {
            Err(Error::Unreachable { zone, .. }) => assert_eq!(zone, "zone1"),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }
}
