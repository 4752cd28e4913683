use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use rc_excite::harness::{
    compare_runs, run_preset, run_scenario, write_outputs, write_preset, Preset, ReportSummary, RunReport, RunStatus,
    ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "rc-excite", version, about = "Closed-loop RC identification, MPC and self-excitation scenarios")]
struct Cli {
    /// Override the scenario seed (weather, sensors and filter seeding).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to the scenario's `out_dir`, else `out/<name>`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for concurrent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run { scenario: PathBuf },
    /// Run shipped presets by name, or `all`.
    Preset {
        #[arg(required = true)]
        names: Vec<String>,
        /// Give the `table2-comparison` MPC week the true model instead of an acquired one.
        #[arg(long)]
        true_model: bool,
    },
    /// Compare two runs, given as `report.csv` files or run directories.
    Compare { a: PathBuf, b: PathBuf },
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.csv")
    } else {
        p.to_path_buf()
    }
}

fn print_summary(report: &RunReport, dir: &Path) {
    let m = &report.metrics;
    println!(
        "{}: {} steps, energy {:.3}, discomfort {:.4}, occupied compliance {:.4} -> {}",
        report.config.name,
        report.trace.len(),
        m.energy,
        m.discomfort,
        m.occupied_compliance(),
        dir.display()
    );
    if let Some(est) = &report.final_estimate {
        for (label, (mean, truth)) in est.labels.iter().zip(est.mean.iter().zip(&report.truth)) {
            println!("  {label:<8} {mean:>12.4} (true {truth})");
        }
    }
    if let RunStatus::Failed(msg) = &report.status {
        eprintln!("{}: run failed: {msg}", report.config.name);
    }
}

fn run(cli: &Cli, scenario: &Path) -> rc_excite::Result<bool> {
    let mut cfg = ScenarioConfig::load(scenario)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let dir = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let mut report = run_scenario(&cfg)?;
    write_outputs(&mut report, &dir)?;
    print_summary(&report, &dir);
    Ok(report.status == RunStatus::Completed)
}

fn presets(cli: &Cli, names: &[String], true_model: bool) -> rc_excite::Result<bool> {
    let mut selected: Vec<Preset> = Vec::new();
    for name in names {
        let batch = if name == "all" { Preset::ALL.to_vec() } else { vec![Preset::from_name(name)?] };
        for p in batch {
            if !selected.contains(&p) {
                selected.push(p);
            }
        }
    }
    let seed = cli.seed.unwrap_or(0);
    let root = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| rc_excite::Error::Config(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    let outcomes: Vec<_> = pool.install(|| selected.par_iter().map(|&p| run_preset(p, seed, true_model)).collect());
    let mut ok = true;
    for outcome in outcomes {
        let mut outcome = outcome?;
        let dir = root.join(outcome.preset.name());
        write_preset(&mut outcome, &dir)?;
        for run in &outcome.runs {
            print_summary(run, &dir.join(&run.config.name));
            ok &= run.status == RunStatus::Completed;
        }
        if let Some(c) = &outcome.comparison {
            print!("{}", c.to_table());
        }
    }
    Ok(ok)
}

fn compare(cli: &Cli, a: &Path, b: &Path) -> rc_excite::Result<bool> {
    let ra = ReportSummary::load(&report_path(a))?;
    let rb = ReportSummary::load(&report_path(b))?;
    let c = compare_runs(&ra, &rb)?;
    print!("{}", c.to_table());
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.csv"), c.to_csv())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario } => run(&cli, scenario),
        Command::Preset { names, true_model } => presets(&cli, names, *true_model),
        Command::Compare { a, b } => compare(&cli, a, b),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
