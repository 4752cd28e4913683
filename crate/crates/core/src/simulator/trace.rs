//! Per-step record of a closed-loop run.

use serde::{Deserialize, Serialize};

/// Which controller produced the step's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Heaters off; passive response.
    Passive,
    Thermostat,
    Mpc,
    /// Thermostat applied because the MPC solve failed.
    Fallback,
    /// An excitation experiment modified the bounds.
    Excitation,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Passive => "passive",
            Mode::Thermostat => "thermostat",
            Mode::Mpc => "mpc",
            Mode::Fallback => "fallback",
            Mode::Excitation => "excitation",
        }
    }
}

/// State at the start of control step `step` and the input applied over it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    /// Every node, external included.
    pub true_temps: Vec<f64>,
    pub measured: Vec<f64>,
    pub t_ext: f64,
    /// One per heated zone.
    pub u: Vec<f64>,
    /// One per internal node.
    pub r_min: Vec<f64>,
    pub r_max: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl SimulationTrace {
    pub fn new(dt: f64) -> Self {
        Self { dt, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(row.step == self.rows.len(), "trace rows must be contiguous");
        self.rows.push(row);
    }
}
