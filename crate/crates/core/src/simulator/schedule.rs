//! Occupancy windows and the comfort bounds they imply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::weather::MINUTES_PER_DAY;

/// Occupied interval on given weekdays (0 = Monday), `[start, end)` in minutes
/// after midnight. Simulation time 0 is Monday 00:00.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupiedWindow {
    pub days: Vec<u8>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancySchedule {
    pub windows: Vec<OccupiedWindow>,
    pub occupied: (f64, f64),
    pub unoccupied: (f64, f64),
}

impl Default for OccupancySchedule {
    /// Weekdays 08:00 to 18:00 at [68, 72], otherwise [60, 80].
    fn default() -> Self {
        Self {
            windows: vec![OccupiedWindow { days: vec![0, 1, 2, 3, 4], start: 8.0 * 60.0, end: 18.0 * 60.0 }],
            occupied: (68.0, 72.0),
            unoccupied: (60.0, 80.0),
        }
    }
}

impl OccupancySchedule {
    pub fn validate(&self) -> Result<()> {
        let (omin, omax) = self.occupied;
        let (umin, umax) = self.unoccupied;
        if !(omin < omax && umin < umax) {
            return Err(Error::Config("comfort bounds need r_min < r_max".into()));
        }
        if !(umin <= omin && omax <= umax) {
            return Err(Error::Config("occupied bounds must nest inside unoccupied bounds".into()));
        }
        for w in &self.windows {
            if !(0.0 <= w.start && w.start < w.end && w.end <= MINUTES_PER_DAY) {
                return Err(Error::Config(format!("bad occupancy window {}..{}", w.start, w.end)));
            }
            if w.days.iter().any(|&d| d > 6) {
                return Err(Error::Config("weekday index must be 0..=6".into()));
            }
        }
        Ok(())
    }

    pub fn is_occupied(&self, t: f64) -> bool {
        let day = (t / MINUTES_PER_DAY).floor();
        let weekday = day.rem_euclid(7.0) as u8;
        let clock = t - day * MINUTES_PER_DAY;
        self.windows.iter().any(|w| w.days.contains(&weekday) && w.start <= clock && clock < w.end)
    }

    pub fn bounds_at(&self, t: f64) -> (f64, f64) {
        if self.is_occupied(t) {
            self.occupied
        } else {
            self.unoccupied
        }
    }
}

/// Per-zone `(r_min, r_max)` at time `t`; every zone follows the same schedule.
pub fn comfort_bounds(sched: &OccupancySchedule, t: f64, zones: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = sched.bounds_at(t);
    (vec![lo; zones], vec![hi; zones])
}
