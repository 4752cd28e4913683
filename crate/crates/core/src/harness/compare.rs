//! Side-by-side comparison of two runs.

use std::fmt::Write as _;

use crate::error::{contract, Result};
use crate::harness::output::{fmt_f64, ReportSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b / a`; 1 when both are zero.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name_a: String,
    pub name_b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn ratio(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric).map(|r| r.ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("metric,{},{},ratio\n", self.name_a, self.name_b);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.metric, fmt_f64(r.a), fmt_f64(r.b), fmt_f64(r.ratio));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let w = self.name_a.len().max(self.name_b.len()).max(12);
        let mut out = format!("{:<20} {:>w$} {:>w$} {:>10}\n", "metric", self.name_a, self.name_b, "ratio");
        for r in &self.rows {
            let _ =
                writeln!(out, "{:<20} {:>w$} {:>w$} {:>10}", r.metric, fmt_f64(r.a), fmt_f64(r.b), fmt_f64(r.ratio));
        }
        out
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        b / a
    }
}

/// Compare run `b` against run `a`. Both must cover the same duration on the
/// same weather.
pub fn compare_runs(a: &ReportSummary, b: &ReportSummary) -> Result<Comparison> {
    if a.duration != b.duration {
        return Err(contract(format!("durations differ: {} vs {}", a.duration, b.duration)));
    }
    if a.weather_seed != b.weather_seed {
        return Err(contract(format!("weather seeds differ: {} vs {}", a.weather_seed, b.weather_seed)));
    }
    let row = |metric: &str, x: f64, y: f64| ComparisonRow { metric: metric.into(), a: x, b: y, ratio: ratio(x, y) };
    Ok(Comparison {
        name_a: a.name.clone(),
        name_b: b.name.clone(),
        rows: vec![
            row("energy", a.energy, b.energy),
            row("discomfort", a.discomfort, b.discomfort),
            row("occupied_compliance", a.occupied_compliance, b.occupied_compliance),
        ],
    })
}
