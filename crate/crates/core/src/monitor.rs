//! Estimator guards: physics checks, checkpoints and filter-bank consensus.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::ukf::UkfState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// A parameter at or below `floor_rel × |initial estimate|` is a violation.
    pub floor_rel: f64,
    /// Minutes between checkpoints.
    pub checkpoint_every: f64,
    /// After a restore, parameter process noise is multiplied by this factor...
    pub restore_noise_boost: f64,
    /// ...for this many minutes.
    pub restore_boost_duration: f64,
    /// Minutes between consensus tests.
    pub consensus_every: f64,
    /// Filters in the consensus bank (the primary filter included).
    pub bank_size: usize,
    /// Pairwise distance, in pooled standard deviations, above which two
    /// filters disagree.
    pub consensus_threshold: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            floor_rel: 1e-6,
            checkpoint_every: 360.0,
            restore_noise_boost: 2.0,
            restore_boost_duration: 720.0,
            consensus_every: 1440.0,
            bank_size: 3,
            consensus_threshold: 3.0,
        }
    }
}

/// A parameter that left the physical region.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offset in the state vector.
    pub index: usize,
    pub label: String,
    pub value: f64,
    pub floor: f64,
}

/// Parameters at or below their floor. `initial` holds the initial parameter
/// estimates (`p` then `q`) that set each floor.
pub fn check_physics(ukf: &UkfState, initial: &[f64], floor_rel: f64) -> Vec<Violation> {
    let labels = ukf.layout().labels();
    ukf.parameter_range()
        .zip(labels)
        .enumerate()
        .filter_map(|(k, (idx, label))| {
            let floor = floor_rel * initial.get(k).copied().unwrap_or(1.0).abs();
            let value = ukf.x[idx];
            (!(value > floor)).then_some(Violation { index: idx, label, value, floor })
        })
        .collect()
}

/// Saved filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: UkfState,
    pub time: f64,
}

pub fn checkpoint(ukf: &UkfState, time: f64) -> Checkpoint {
    Checkpoint { state: ukf.clone(), time }
}

pub fn restore(cp: &Checkpoint) -> UkfState {
    cp.state.clone()
}

/// Pairwise parameter distances across a filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusReport {
    pub labels: Vec<String>,
    /// `distances[k][a][b]` for parameter `k` between filters `a` and `b`.
    pub distances: Vec<Vec<Vec<f64>>>,
    pub threshold: f64,
    pub consensus: bool,
}

impl ConsensusReport {
    /// Largest distance over every parameter and pair.
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().flatten().flatten().copied().fold(0.0, f64::max)
    }

    /// Mean distance from filter `a` to every other filter, over all parameters.
    pub fn mean_distance(&self, a: usize) -> f64 {
        let m = self.distances.first().map_or(0, |d| d.len());
        let mut sum = 0.0;
        let mut count = 0;
        for per_param in &self.distances {
            for b in (0..m).filter(|&b| b != a) {
                sum += per_param[a][b];
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// The filter furthest from the others on average, if consensus failed.
    pub fn outlier(&self) -> Option<usize> {
        if self.consensus {
            return None;
        }
        let m = self.distances.first().map_or(0, |d| d.len());
        (0..m).max_by(|&a, &b| self.mean_distance(a).total_cmp(&self.mean_distance(b)))
    }
}

fn distance(xa: f64, va: f64, xb: f64, vb: f64) -> f64 {
    let diff = (xa - xb).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let pooled = (va.max(0.0) + vb.max(0.0)).sqrt();
    if pooled == 0.0 {
        f64::INFINITY
    } else {
        diff / pooled
    }
}

/// `|x̂_a − x̂_b| / sqrt(P_a + P_b)` for every parameter and filter pair.
pub fn consensus_test(filters: &[UkfState], threshold: f64) -> Result<ConsensusReport> {
    if filters.len() < 2 {
        return Err(contract("consensus needs at least two filters"));
    }
    let layout = filters[0].layout();
    if filters.iter().any(|f| f.layout() != layout) {
        return Err(contract("filters in a bank must share a structure"));
    }
    let labels = layout.labels();
    let range = filters[0].parameter_range();
    let m = filters.len();
    let mut distances = Vec::with_capacity(labels.len());
    for idx in range {
        let mut d = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in (a + 1)..m {
                let v =
                    distance(filters[a].x[idx], filters[a].p[(idx, idx)], filters[b].x[idx], filters[b].p[(idx, idx)]);
                d[a][b] = v;
                d[b][a] = v;
            }
        }
        distances.push(d);
    }
    let consensus = distances.iter().flatten().flatten().all(|&v| v < threshold);
    Ok(ConsensusReport { labels, distances, threshold, consensus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{minimal_parameterization, ThermalNetwork};
    use crate::ukf::UkfConfig;
    use nalgebra::DVector;

    fn filter() -> UkfState {
        let pv = minimal_parameterization(&ThermalNetwork::two_zone());
        UkfState::new(&DVector::from_vec(vec![70.0, 65.0, 20.0]), &pv, &UkfConfig::default()).unwrap()
    }

    fn initial(f: &UkfState) -> Vec<f64> {
        f.parameter_range().map(|i| f.x[i]).collect()
    }

    #[test]
    fn healthy_filter_has_no_violation() {
        let f = filter();
        assert!(check_physics(&f, &initial(&f), 1e-6).is_empty());
    }

    #[test]
    fn negative_and_zero_parameters_flagged() {
        let f = filter();
        let init = initial(&f);
        let mut g = f.clone();
        g.x[f.p_offset() + 1] = -10.0;
        let v = check_physics(&g, &init, 1e-6);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].label, "R13C1");
        let mut h = f.clone();
        h.x[f.p_offset()] = 0.0;
        assert_eq!(check_physics(&h, &init, 1e-6)[0].label, "R12C1");
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut f = filter();
        f.x[0] = 0.1 + 0.2;
        f.step = 17;
        let cp = checkpoint(&f, 360.0);
        assert_eq!(restore(&cp), f);
    }

    #[test]
    fn identical_filters_agree() {
        let f = filter();
        let r = consensus_test(&[f.clone(), f.clone(), f], 3.0).unwrap();
        assert!(r.consensus);
        assert_eq!(r.max_distance(), 0.0);
        assert_eq!(r.outlier(), None);
    }

    #[test]
    fn distance_arithmetic() {
        let mut a = filter();
        let mut b = filter();
        let i = a.p_offset();
        a.x[i] = 100.0;
        b.x[i] = 200.0;
        a.p[(i, i)] = 1.0;
        b.p[(i, i)] = 1.0;
        let r = consensus_test(&[a, b], 3.0).unwrap();
        assert!((r.distances[0][0][1] - 100.0 / 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.distances[0][0][1], r.distances[0][1][0]);
        assert!(!r.consensus);
    }

    #[test]
    fn stuck_filter_is_the_outlier() {
        let mut bank = vec![filter(), filter(), filter()];
        let i = bank[0].p_offset() + 2;
        for f in &mut bank {
            f.p[(i, i)] = 1.0;
        }
        bank[2].x[i] *= 3.0;
        let r = consensus_test(&bank, 3.0).unwrap();
        assert!(!r.consensus);
        assert_eq!(r.outlier(), Some(2));
    }

    #[test]
    fn mismatched_bank_rejected() {
        let f = filter();
        assert!(consensus_test(&[f], 3.0).is_err());
    }
}
