use std::path::Path;

use rc_excite::harness::output::trace_csv;
use rc_excite::harness::presets::{acquisition, fig5_failure, fig6_pair, mpc_week};
use rc_excite::harness::{
    run_scenario, write_outputs, ControllerKind, EventKind, ModelSource, ReportSummary, RunStatus, ScenarioConfig,
    SeedDistribution,
};
use rc_excite::simulator::Mode;
use sha2::{Digest, Sha256};

const DAY: f64 = 1440.0;

fn thermostat_day(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { name: "day".into(), ..ScenarioConfig::default() };
    cfg.estimator.enabled = false;
    cfg.with_seed(seed)
}

#[test]
fn scenario_files_round_trip() {
    let (_, bad) = fig6_pair(4);
    for cfg in [ScenarioConfig::default(), acquisition(2), fig5_failure(9), bad] {
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn network_path_resolves_against_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("net.toml"), rc_excite::network::ThermalNetwork::two_zone().to_toml()).unwrap();
    std::fs::write(dir.path().join("s.toml"), "network = \"net.toml\"\n[estimator]\nenabled = false\n").unwrap();
    let cfg = ScenarioConfig::load(&dir.path().join("s.toml")).unwrap();
    assert_eq!(cfg.network().unwrap(), rc_excite::network::ThermalNetwork::two_zone());

    std::fs::write(dir.path().join("bad.toml"), "network = \"missing.toml\"\n").unwrap();
    let cfg = ScenarioConfig::load(&dir.path().join("bad.toml")).unwrap();
    assert!(run_scenario(&cfg).is_err());
}

#[test]
fn outputs_match_manifest_and_report() {
    let mut report = run_scenario(&acquisition(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&mut report, dir.path()).unwrap();

    let listing = std::fs::read_to_string(dir.path().join("manifest.sha256")).unwrap();
    let mut files = Vec::new();
    for line in listing.lines() {
        let (hash, file) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(dir.path().join(file)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), hash, "{file}");
        files.push(file.to_string());
    }
    assert_eq!(files, ["trace.csv", "events.log", "estimates.csv", "report.csv"]);

    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let summary = ReportSummary::load(&dir.path().join("report.csv")).unwrap();
    assert_eq!(summary.to_csv(), text);
    assert_eq!(summary.steps, 288);
    assert_eq!(summary.energy, report.metrics.energy);
    assert!((summary.discomfort - report.metrics.discomfort).abs() < 1e-8 * report.metrics.discomfort);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 289);
}

#[test]
fn missing_report_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = ReportSummary::load(&dir.path().join("report.csv")).unwrap_err();
    assert!(err.to_string().contains("report.csv"), "{err}");
}

#[test]
fn same_seed_same_bytes_different_seed_different_weather() {
    let a = trace_csv(&run_scenario(&thermostat_day(5)).unwrap());
    let b = trace_csv(&run_scenario(&thermostat_day(5)).unwrap());
    let c = trace_csv(&run_scenario(&thermostat_day(6)).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn mpc_waits_for_convergence() {
    let mut cfg = acquisition(3);
    cfg.phases.clear();
    cfg.controller.kind = ControllerKind::Mpc;
    cfg.excitation.method = rc_excite::harness::ExcitationMethod::None;
    cfg.duration = 2.0 * DAY;
    let report = run_scenario(&cfg).unwrap();
    let first_mpc = report.trace.rows.iter().find(|r| r.mode == Mode::Mpc).map(|r| r.time);
    match (report.converged_at, first_mpc) {
        (None, None) => {}
        (Some(c), Some(m)) => assert!(m >= c, "MPC at {m} before convergence at {c}"),
        (Some(_), None) => {}
        (None, Some(m)) => panic!("MPC at {m} without convergence"),
    }
    assert!(report.trace.rows.iter().any(|r| r.mode == Mode::Thermostat));
}

#[test]
fn mpc_without_estimator_must_be_forced() {
    let mut cfg = mpc_week(0, ModelSource::True);
    cfg.controller.force_mpc = false;
    assert!(cfg.validate().is_err());
}

#[test]
fn restore_replays_with_boosted_noise() {
    // A floor just under the seeds trips the physics check as the
    // over-estimated products fall towards the truth.
    let mut cfg = acquisition(2);
    cfg.duration = DAY;
    cfg.estimator.seeds = SeedDistribution::Uniform { lo: 1.5, hi: 1.6 };
    cfg.estimator.monitor.floor_rel = 0.97;
    let a = run_scenario(&cfg).unwrap();
    assert_eq!(a.status, RunStatus::Completed);
    assert!(a.violations > 0);
    let restore = a.events.iter().find(|e| e.kind == EventKind::Restore).expect("a restore");
    assert!(restore.message.contains("replayed="));
    let row = a.estimate_at(restore.time).unwrap();
    assert_eq!(row.noise_scale, cfg.estimator.monitor.restore_noise_boost);

    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(a.events, b.events);
}

#[test]
fn consensus_runs_on_schedule_and_flags_a_stuck_filter() {
    let mut cfg = fig5_failure(0);
    cfg.estimator.monitor.consensus_every = 720.0;
    let report = run_scenario(&cfg).unwrap();
    let times: Vec<f64> = report.events.iter().filter(|e| e.kind == EventKind::Consensus).map(|e| e.time).collect();
    assert_eq!(times, [720.0, 1440.0, 2160.0]);

    let mut cfg = acquisition(0);
    cfg.duration = DAY + 15.0;
    cfg.estimator.ukf.initial_p_rel_std = 0.01;
    cfg.estimator.seeds = SeedDistribution::Uniform { lo: 0.5, hi: 3.0 };
    let report = run_scenario(&cfg).unwrap();
    let last = report.events.iter().rfind(|e| e.kind == EventKind::Consensus).unwrap();
    assert!(last.message.starts_with("disagree"), "{}", last.message);
}

/// A cold weekday on the true model: the MPC preheats before occupancy and
/// misses the occupied band less than the thermostat.
#[test]
fn mpc_preheats_and_tracks_the_band() {
    let mut thermo = thermostat_day(11);
    thermo.initial_temps = vec![62.0, 62.0];
    thermo.weather.mean_temp = 10.0;
    let mut mpc = thermo.clone();
    mpc.name = "mpc".into();
    mpc.controller.kind = ControllerKind::Mpc;
    mpc.controller.force_mpc = true;
    mpc.controller.model = ModelSource::True;

    let (rt, rm) = rayon::join(|| run_scenario(&thermo).unwrap(), || run_scenario(&mpc).unwrap());
    assert!(rm.trace.rows.iter().all(|r| r.mode == Mode::Mpc));
    assert!(rm.metrics.discomfort <= rt.metrics.discomfort + 1e-9);
    assert!(rm.metrics.occupied_compliance() >= 0.95);
    let mut before_open = rm.trace.rows.iter().filter(|r| r.time >= 6.0 * 60.0 && r.time < 8.0 * 60.0);
    assert!(before_open.any(|r| r.u.iter().any(|&u| u > 0.1)));
    let at_open = rm.trace.rows.iter().find(|r| r.time == 8.0 * 60.0).unwrap();
    assert!(at_open.true_temps[..2].iter().all(|&t| t > 67.5), "{:?}", at_open.true_temps);
}

#[test]
fn shipped_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let net = rc_excite::network::ThermalNetwork::load(&dir.join("two_zone.toml")).unwrap();
    assert_eq!(net, rc_excite::network::ThermalNetwork::two_zone());
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "two_zone.toml" {
            continue;
        }
        let cfg = ScenarioConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert_eq!(seen, 3);
    let acq = ScenarioConfig::load(&dir.join("acquisition.toml")).unwrap();
    let mut expected = acquisition(0);
    expected.observability.enabled = true;
    assert_eq!(acq.phases, expected.phases);
    assert_eq!(acq.excitation, expected.excitation);
}
