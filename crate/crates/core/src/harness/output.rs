//! CSV and log export.
//!
//! Every float is written with 9 significant digits.
//!
//! `trace.csv`: `step,time`, then `T_<node>,Tm_<node>` (true, measured) per
//! node, `T_ext`, `u_<zone>` per heater, `r_min_<node>` and `r_max_<node>` per
//! internal node, `mode`.
//!
//! `estimates.csv`: `step,time,converged,noise_scale`, `<label>,<label>_std`
//! per parameter, `That_<node>` per node, `nees`.
//!
//! `observability.csv`: `time,rank,inv_condition`, then the nullspace
//! magnitude of each augmented coordinate.
//!
//! `report.csv`: `key,value` rows (see [`ReportSummary`]), including the hash
//! of every other file. `manifest.sha256` lists every file, `report.csv`
//! included, in `sha256sum` format.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::analysis::coordinate_labels;
use crate::error::{Error, Result};
use crate::harness::run::{ManifestEntry, RunReport};
use crate::network::minimal_parameterization;

/// `x` with 9 significant digits, shortest form (`%.9g`).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
}

pub fn trace_csv(report: &RunReport) -> String {
    let net = &report.network;
    let mut head = vec!["step".to_string(), "time".to_string()];
    for n in net.nodes() {
        head.push(format!("T_{}", n.name));
        head.push(format!("Tm_{}", n.name));
    }
    head.push("T_ext".into());
    for &h in &net.heated_nodes() {
        head.push(format!("u_{}", net.nodes()[h].name));
    }
    let internal = net.internal_nodes();
    head.extend(internal.iter().map(|&i| format!("r_min_{}", net.nodes()[i].name)));
    head.extend(internal.iter().map(|&i| format!("r_max_{}", net.nodes()[i].name)));
    head.push("mode".into());
    let mut out = head.join(",") + "\n";
    for r in &report.trace.rows {
        let temps: Vec<f64> = r.true_temps.iter().zip(&r.measured).flat_map(|(a, b)| [*a, *b]).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.time),
            join(temps),
            fmt_f64(r.t_ext),
            join(r.u.iter().copied()),
            join(r.r_min.iter().copied()),
            join(r.r_max.iter().copied()),
            r.mode.as_str()
        );
    }
    out
}

pub fn estimates_csv(report: &RunReport) -> String {
    let mut head = vec!["step".to_string(), "time".into(), "converged".into(), "noise_scale".into()];
    for l in report.parameter_labels() {
        head.push(l.clone());
        head.push(format!("{l}_std"));
    }
    head.extend(report.network.nodes().iter().map(|n| format!("That_{}", n.name)));
    head.push("nees".into());
    let mut out = head.join(",") + "\n";
    for e in &report.estimates {
        let params: Vec<f64> = e.mean.iter().zip(&e.std).flat_map(|(m, s)| [*m, *s]).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.step,
            fmt_f64(e.time),
            u8::from(e.converged),
            fmt_f64(e.noise_scale),
            join(params),
            join(e.temps.iter().copied()),
            fmt_f64(e.nees)
        );
    }
    out
}

pub fn observability_csv(report: &RunReport) -> String {
    let labels = coordinate_labels(&minimal_parameterization(&report.network), &report.network);
    let mut out = format!("time,rank,inv_condition,{}\n", labels.join(","));
    for s in &report.observability {
        let inv =
            if s.condition_number.is_finite() && s.condition_number > 0.0 { 1.0 / s.condition_number } else { 0.0 };
        let _ = writeln!(out, "{},{},{},{}", fmt_f64(s.time), s.rank, fmt_f64(inv), join(s.magnitudes.iter().copied()));
    }
    out
}

pub fn events_log(report: &RunReport) -> String {
    let mut out = String::new();
    for e in &report.events {
        let _ = writeln!(out, "{} {} {}", fmt_f64(e.time), e.kind.as_str(), e.message);
    }
    out
}

/// Scalar results of one run, as stored in `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub name: String,
    pub status: String,
    pub duration: f64,
    pub seed: u64,
    pub weather_seed: u64,
    pub steps: usize,
    pub energy: f64,
    pub discomfort: f64,
    pub occupied_compliance: f64,
    pub violations: usize,
    pub experiments: usize,
    pub converged_at: Option<f64>,
    /// `(label, value)` pairs beyond the fixed fields, in file order.
    pub extra: Vec<(String, String)>,
}

impl ReportSummary {
    pub fn from_report(report: &RunReport) -> Self {
        let m = &report.metrics;
        let mut extra = Vec::new();
        for (z, e) in m.zone_energy.iter().enumerate() {
            extra.push((format!("energy_u{z}"), fmt_f64(*e)));
        }
        for (z, d) in m.zone_discomfort.iter().enumerate() {
            extra.push((format!("discomfort_zone{z}"), fmt_f64(*d)));
        }
        if let Some(f) = &report.final_estimate {
            for (k, label) in f.labels.iter().enumerate() {
                extra.push((format!("estimate_{label}"), fmt_f64(f.mean[k])));
                extra.push((format!("std_{label}"), fmt_f64(f.covariance[(k, k)].max(0.0).sqrt())));
                extra.push((format!("truth_{label}"), fmt_f64(report.truth[k])));
            }
        }
        for entry in &report.manifest {
            extra.push((format!("sha256_{}", entry.file), entry.sha256.clone()));
        }
        Self {
            name: report.config.name.clone(),
            status: report.status.as_str().to_string(),
            duration: report.config.duration,
            seed: report.config.seed,
            weather_seed: report.config.weather.seed,
            steps: m.steps,
            energy: m.energy,
            discomfort: m.discomfort,
            occupied_compliance: m.occupied_compliance(),
            violations: report.violations,
            experiments: report.experiments.len(),
            converged_at: report.converged_at,
            extra,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("name".into(), self.name.clone()),
            ("status".into(), self.status.clone()),
            ("duration".into(), fmt_f64(self.duration)),
            ("seed".into(), self.seed.to_string()),
            ("weather_seed".into(), self.weather_seed.to_string()),
            ("steps".into(), self.steps.to_string()),
            ("energy".into(), fmt_f64(self.energy)),
            ("discomfort".into(), fmt_f64(self.discomfort)),
            ("occupied_compliance".into(), fmt_f64(self.occupied_compliance)),
            ("violations".into(), self.violations.to_string()),
            ("experiments".into(), self.experiments.to_string()),
            ("converged_at".into(), self.converged_at.map_or_else(|| "none".into(), fmt_f64)),
        ];
        rows.extend(self.extra.iter().cloned());
        let mut out = String::from("key,value\n");
        for (k, v) in rows {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |m: String| Error::Parse { path: origin.to_string(), message: m };
        let mut lines = text.lines();
        if lines.next() != Some("key,value") {
            return Err(err("missing key,value header".into()));
        }
        let mut map = Vec::new();
        for (i, line) in lines.enumerate() {
            let (k, v) = line.split_once(',').ok_or_else(|| err(format!("line {} has no comma", i + 2)))?;
            map.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| -> Result<String> {
            map.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).ok_or_else(|| err(format!("missing key {key}")))
        };
        let num = |key: &str| -> Result<f64> { get(key)?.parse::<f64>().map_err(|e| err(format!("{key}: {e}"))) };
        let int = |key: &str| -> Result<u64> { get(key)?.parse::<u64>().map_err(|e| err(format!("{key}: {e}"))) };
        const FIXED: [&str; 12] = [
            "name",
            "status",
            "duration",
            "seed",
            "weather_seed",
            "steps",
            "energy",
            "discomfort",
            "occupied_compliance",
            "violations",
            "experiments",
            "converged_at",
        ];
        let converged_at = match get("converged_at")?.as_str() {
            "none" => None,
            v => Some(v.parse::<f64>().map_err(|e| err(format!("converged_at: {e}")))?),
        };
        Ok(Self {
            name: get("name")?,
            status: get("status")?,
            duration: num("duration")?,
            seed: int("seed")?,
            weather_seed: int("weather_seed")?,
            steps: int("steps")? as usize,
            energy: num("energy")?,
            discomfort: num("discomfort")?,
            occupied_compliance: num("occupied_compliance")?,
            violations: int("violations")? as usize,
            experiments: int("experiments")? as usize,
            converged_at,
            extra: map.into_iter().filter(|(k, _)| !FIXED.contains(&k.as_str())).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read report {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write every output file of `report` into `dir` (created if needed) and
/// record them in the report's manifest.
pub fn write_outputs(report: &mut RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec![("trace.csv", trace_csv(report)), ("events.log", events_log(report))];
    if !report.estimates.is_empty() {
        files.push(("estimates.csv", estimates_csv(report)));
    }
    if !report.observability.is_empty() {
        files.push(("observability.csv", observability_csv(report)));
    }
    report.manifest.clear();
    for (name, body) in &files {
        std::fs::write(dir.join(name), body)?;
        report.manifest.push(ManifestEntry { file: name.to_string(), sha256: sha256_hex(body.as_bytes()) });
    }
    let summary = ReportSummary::from_report(report).to_csv();
    std::fs::write(dir.join("report.csv"), &summary)?;
    report.manifest.push(ManifestEntry { file: "report.csv".into(), sha256: sha256_hex(summary.as_bytes()) });
    let listing: String = report.manifest.iter().map(|e| format!("{}  {}\n", e.sha256, e.file)).collect();
    std::fs::write(dir.join("manifest.sha256"), listing)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-2.5), "-2.5");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_f64(2550.0), "2550");
        assert_eq!(fmt_f64(123456789.4), "123456789");
        assert_eq!(fmt_f64(1234567890.0), "1.23456789e9");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(0.000123456789123), "0.000123456789");
        assert_eq!(fmt_f64(9.9999999999), "10");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(ReportSummary::parse("nope", "x").is_err());
        assert!(ReportSummary::parse("key,value\nname,a\n", "x").is_err());
    }
}
