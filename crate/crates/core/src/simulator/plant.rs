//! Ground-truth plant integration and sensors.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Result};
use crate::network::{discrete_model, minimal_parameterization, DiscreteDynamics, ThermalNetwork};
use crate::rng::{stream, TAG_SENSOR};
use crate::simulator::weather::{external_temperature, WeatherModel};

/// True temperatures of every node (external nodes included) at `clock` minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub temps: DVector<f64>,
    pub clock: f64,
}

/// The true building, integrated with exact ZOH over short sub-steps while
/// the external node follows the weather.
#[derive(Debug, Clone)]
pub struct Plant {
    network: ThermalNetwork,
    sub: DiscreteDynamics,
}

impl Plant {
    pub fn new(network: ThermalNetwork, substep: f64) -> Result<Self> {
        let sub = discrete_model(&minimal_parameterization(&network), &network, substep)?;
        Ok(Self { network, sub })
    }

    pub fn network(&self) -> &ThermalNetwork {
        &self.network
    }

    pub fn substep(&self) -> f64 {
        self.sub.dt
    }

    /// State at `clock` with internal temperatures `internal` and the external
    /// nodes at the current weather value.
    pub fn initial_state(&self, internal: &[f64], w: &WeatherModel, clock: f64) -> Result<PlantState> {
        if internal.len() != self.sub.internal.len() {
            return Err(contract(format!(
                "{} initial temperatures for {} internal nodes",
                internal.len(),
                self.sub.internal.len()
            )));
        }
        let mut temps = DVector::zeros(self.network.node_count());
        for (&i, &t) in self.sub.internal.iter().zip(internal) {
            temps[i] = t;
        }
        let ext = external_temperature(w, clock);
        for &e in &self.sub.external {
            temps[e] = ext;
        }
        Ok(PlantState { temps, clock })
    }
}

/// Advance the plant by `dt` minutes with `u` held. The external temperature is
/// held at its value at the start of each sub-step.
pub fn step_plant(
    plant: &Plant,
    state: &PlantState,
    u: &DVector<f64>,
    w: &WeatherModel,
    dt: f64,
) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(contract(format!("plant step must be positive, got {dt}")));
    }
    if u.len() != plant.sub.n_controls() {
        return Err(contract(format!("{} control inputs for {} heaters", u.len(), plant.sub.n_controls())));
    }
    if let Some(k) = u.iter().position(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(contract(format!("control input {k} = {} outside [0, 1]", u[k])));
    }
    let h = plant.sub.dt;
    let n_sub = (dt / h).round() as usize;
    if n_sub == 0 || ((n_sub as f64) * h - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(contract(format!("step {dt} is not a whole number of {h}-minute sub-steps")));
    }
    let ni = plant.sub.internal.len();
    let ne = plant.sub.external.len();
    let mut t_int = DVector::from_iterator(ni, plant.sub.internal.iter().map(|&i| state.temps[i]));
    for s in 0..n_sub {
        let t = state.clock + s as f64 * h;
        let t_ext = DVector::from_element(ne, external_temperature(w, t));
        t_int = plant.sub.step(&t_int, &t_ext, u);
    }
    let clock = state.clock + dt;
    let mut temps = state.temps.clone();
    for (r, &i) in plant.sub.internal.iter().enumerate() {
        temps[i] = t_int[r];
    }
    let ext = external_temperature(w, clock);
    for &e in &plant.sub.external {
        temps[e] = ext;
    }
    Ok(PlantState { temps, clock })
}

/// True temperatures plus i.i.d. Gaussian noise. The noise stream is keyed by
/// `seed` and the state's clock, so a given sensor read is reproducible.
pub fn measure(state: &PlantState, noise_std: f64, seed: u64) -> DVector<f64> {
    if noise_std == 0.0 {
        return state.temps.clone();
    }
    let mut rng = stream(seed, TAG_SENSOR, state.clock.to_bits());
    state.temps.map(|t| {
        let z: f64 = rng.sample(StandardNormal);
        t + noise_std * z
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> Plant {
        Plant::new(ThermalNetwork::two_zone(), 1.0).unwrap()
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let p = plant();
        let w = WeatherModel::constant(65.0);
        let s0 = p.initial_state(&[65.0, 65.0], &w, 0.0).unwrap();
        let s1 = step_plant(&p, &s0, &DVector::zeros(2), &w, 15.0).unwrap();
        assert!((s1.temps - &s0.temps).amax() < 1e-12);
        assert_eq!(s1.clock, 15.0);
    }

    #[test]
    fn free_cooling_is_monotone() {
        let p = plant();
        let w = WeatherModel::constant(20.0);
        let mut s = p.initial_state(&[70.0, 70.0], &w, 0.0).unwrap();
        for _ in 0..96 {
            let next = step_plant(&p, &s, &DVector::zeros(2), &w, 15.0).unwrap();
            assert!(next.temps[0] < s.temps[0] && next.temps[1] < s.temps[1]);
            s = next;
        }
    }

    #[test]
    fn full_heat_warms_for_first_hour() {
        let p = plant();
        let w = WeatherModel::constant(20.0);
        let mut s = p.initial_state(&[70.0, 70.0], &w, 0.0).unwrap();
        for _ in 0..4 {
            let next = step_plant(&p, &s, &DVector::from_element(2, 1.0), &w, 15.0).unwrap();
            assert!(next.temps[0] > s.temps[0] && next.temps[1] > s.temps[1]);
            s = next;
        }
    }

    #[test]
    fn rejects_out_of_range_control() {
        let p = plant();
        let w = WeatherModel::constant(20.0);
        let s = p.initial_state(&[70.0, 70.0], &w, 0.0).unwrap();
        assert!(step_plant(&p, &s, &DVector::from_vec(vec![1.5, 0.0]), &w, 15.0).is_err());
        assert!(step_plant(&p, &s, &DVector::from_vec(vec![-0.1, 0.0]), &w, 15.0).is_err());
    }

    #[test]
    fn measurement_noise() {
        let p = plant();
        let w = WeatherModel::constant(20.0);
        let s = p.initial_state(&[70.0, 70.0], &w, 0.0).unwrap();
        assert_eq!(measure(&s, 0.0, 3), s.temps);
        assert_eq!(measure(&s, 0.1, 3), measure(&s, 0.1, 3));
        let mut draws = Vec::with_capacity(10_000);
        let mut st = s.clone();
        for k in 0..3334 {
            st.clock = k as f64 * 15.0;
            let z = measure(&st, 0.1, 3);
            draws.extend((0..3).map(|i| z[i] - st.temps[i]));
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.095..=0.105).contains(&sd), "sample std {sd}");
    }
}
