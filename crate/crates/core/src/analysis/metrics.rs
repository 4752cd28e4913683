//! Comfort and energy over a closed-loop trace.

use crate::simulator::{comfort_bounds, OccupancySchedule, SimulationTrace};

/// Discomfort is the RMS bound violation of the true zone temperatures against
/// the occupancy schedule; energy is `Σ u` over zones and steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioMetrics {
    pub discomfort: f64,
    pub energy: f64,
    pub zone_discomfort: Vec<f64>,
    pub zone_energy: Vec<f64>,
    pub steps: usize,
    /// Sum of squared violations, kept so runs compose.
    pub violation_sq: f64,
    pub occupied_steps: usize,
    /// Occupied steps with every zone within the bounds (up to `tolerance`).
    pub occupied_within: usize,
}

impl ScenarioMetrics {
    /// Metrics of two consecutive runs of the same building.
    pub fn combine(&self, other: &Self) -> Self {
        let zones = self.zone_energy.len().max(other.zone_energy.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let steps = self.steps + other.steps;
        let violation_sq = self.violation_sq + other.violation_sq;
        let rms = |sq: f64| if steps == 0 || zones == 0 { 0.0 } else { (sq / (steps * zones) as f64).sqrt() };
        let zone_sq = |m: &Self, i: usize| get(&m.zone_discomfort, i).powi(2) * m.steps as f64;
        Self {
            discomfort: rms(violation_sq),
            energy: self.energy + other.energy,
            zone_discomfort: (0..zones)
                .map(|i| if steps == 0 { 0.0 } else { ((zone_sq(self, i) + zone_sq(other, i)) / steps as f64).sqrt() })
                .collect(),
            zone_energy: (0..zones).map(|i| get(&self.zone_energy, i) + get(&other.zone_energy, i)).collect(),
            steps,
            violation_sq,
            occupied_steps: self.occupied_steps + other.occupied_steps,
            occupied_within: self.occupied_within + other.occupied_within,
        }
    }

    /// Share of occupied steps spent within the bounds.
    pub fn occupied_compliance(&self) -> f64 {
        if self.occupied_steps == 0 {
            1.0
        } else {
            self.occupied_within as f64 / self.occupied_steps as f64
        }
    }
}

/// `internal` lists the node index of each zone in `true_temps`; the input
/// columns of the trace are summed per entry for the zone energy breakdown.
pub fn compute_metrics(
    trace: &SimulationTrace,
    sched: &OccupancySchedule,
    internal: &[usize],
    tolerance: f64,
) -> ScenarioMetrics {
    let n = internal.len();
    let m = trace.rows.first().map_or(0, |r| r.u.len());
    let mut zone_sq = vec![0.0; n];
    let mut zone_energy = vec![0.0; m];
    let mut occupied_steps = 0;
    let mut occupied_within = 0;
    for row in &trace.rows {
        let (lo, hi) = comfort_bounds(sched, row.time, n);
        let mut worst: f64 = 0.0;
        for (z, &node) in internal.iter().enumerate() {
            let t = row.true_temps[node];
            let v = (lo[z] - t).max(t - hi[z]).max(0.0);
            zone_sq[z] += v * v;
            worst = worst.max(v);
        }
        for (l, &u) in row.u.iter().enumerate() {
            zone_energy[l] += u;
        }
        if sched.is_occupied(row.time) {
            occupied_steps += 1;
            if worst <= tolerance {
                occupied_within += 1;
            }
        }
    }
    let steps = trace.rows.len();
    let violation_sq: f64 = zone_sq.iter().sum();
    let denom = (steps * n) as f64;
    ScenarioMetrics {
        discomfort: if denom > 0.0 { (violation_sq / denom).sqrt() } else { 0.0 },
        energy: zone_energy.iter().sum(),
        zone_discomfort: zone_sq.iter().map(|s| if steps > 0 { (s / steps as f64).sqrt() } else { 0.0 }).collect(),
        zone_energy,
        steps,
        violation_sq,
        occupied_steps,
        occupied_within,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{Mode, TraceRow};

    fn trace(temps: &[[f64; 2]], u: f64) -> SimulationTrace {
        let mut tr = SimulationTrace::new(15.0);
        for (k, t) in temps.iter().enumerate() {
            tr.push(TraceRow {
                step: k,
                time: 600.0 + 15.0 * k as f64,
                true_temps: vec![t[0], t[1], 30.0],
                measured: vec![t[0], t[1], 30.0],
                t_ext: 30.0,
                u: vec![u, u],
                r_min: vec![68.0; 2],
                r_max: vec![72.0; 2],
                mode: Mode::Thermostat,
            });
        }
        tr
    }

    #[test]
    fn inside_bounds_is_comfortable() {
        let m =
            compute_metrics(&trace(&[[69.0, 70.0], [71.0, 68.5]], 0.0), &OccupancySchedule::default(), &[0, 1], 0.0);
        assert_eq!(m.discomfort, 0.0);
        assert_eq!(m.energy, 0.0);
        assert_eq!(m.occupied_compliance(), 1.0);
    }

    #[test]
    fn violation_arithmetic() {
        // Monday 10:00 occupied, bounds [68, 72]
        let m =
            compute_metrics(&trace(&[[66.0, 70.0], [70.0, 75.0]], 0.5), &OccupancySchedule::default(), &[0, 1], 0.5);
        assert!((m.discomfort - (13.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(m.energy, 2.0);
        assert_eq!(m.occupied_within, 0);
    }

    #[test]
    fn concatenation_composes() {
        let sched = OccupancySchedule::default();
        let a = trace(&[[66.0, 70.0], [70.0, 73.0]], 0.25);
        let b = trace(&[[69.0, 67.0]], 1.0);
        let mut ab = a.clone();
        for mut r in b.rows.clone() {
            r.step = ab.len();
            r.time = 600.0 + 15.0 * r.step as f64;
            ab.push(r);
        }
        let joint = compute_metrics(&ab, &sched, &[0, 1], 0.0);
        let parts = compute_metrics(&a, &sched, &[0, 1], 0.0).combine(&compute_metrics(&b, &sched, &[0, 1], 0.0));
        assert!((joint.discomfort - parts.discomfort).abs() < 1e-12);
        assert!((joint.energy - parts.energy).abs() < 1e-12);
        assert!((joint.zone_discomfort[1] - parts.zone_discomfort[1]).abs() < 1e-12);
    }
}
