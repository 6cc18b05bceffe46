//! `storage-adequacy` command line: validate a study configuration, run a
//! sizing study, or dispatch a fixed fleet against a given shortfall trace.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use storage_adequacy::config::{validate_config, StudyConfig};
use storage_adequacy::dispatch::{simulate_year, verify_log};
use storage_adequacy::exec::Execution;
use storage_adequacy::model::TimeSeries;
use storage_adequacy::output::{
    read_wide_traces, write_dispatch_log, write_study_outputs, write_wide_traces,
};
use storage_adequacy::sizing::{build_fleet, run_study};
use storage_adequacy::Error;

#[derive(Parser)]
#[command(name = "storage-adequacy", version, about = "Storage capacity needed to meet accepted shortfall risks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a study configuration and the trace files it refers to.
    Validate { config: PathBuf },
    /// Run the sizing study and write result, audit and plot files.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of Monte Carlo samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Only run these study years (comma separated).
        #[arg(long, value_delimiter = ',')]
        years: Option<Vec<i32>>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        verbose: bool,
    },
    /// Dispatch a fleet of fixed total capacity against one set of nodal shortfall traces.
    Dispatch {
        config: PathBuf,
        /// Wide CSV `hour,<node id>...` of net shortfall in GW.
        #[arg(long)]
        trace: PathBuf,
        /// Wide CSV of nodal demand in GW; defaults to each node's share of the
        /// first study year's peak demand, held constant.
        #[arg(long)]
        demand: Option<PathBuf>,
        /// Total storage power rating in GW, split between nodes by the configured allocation.
        #[arg(long)]
        capacity: f64,
        #[arg(long)]
        out: PathBuf,
        /// Re-check the dispatch log against the dispatch invariants.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run {
            config,
            out,
            samples,
            seed,
            years,
            threads,
            verbose,
        } => cmd_run(&config, &out, samples, seed, years.as_deref(), threads, verbose),
        Command::Dispatch {
            config,
            trace,
            demand,
            capacity,
            out,
            verify,
            verbose,
        } => cmd_dispatch(&config, &trace, demand.as_deref(), capacity, &out, verify, verbose),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn cmd_validate(path: &Path) -> Result<ExitCode, Error> {
    let c = validate_config(path)?;
    println!(
        "ok: {} nodes, {} edges, {} study years, {} categories, {} samples",
        c.network.node_count(),
        c.network.edges().len(),
        c.years.len(),
        c.categories.len(),
        c.sizing.n_samples
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(
    path: &Path,
    out: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
    years: Option<&[i32]>,
    threads: Option<usize>,
    verbose: bool,
) -> Result<ExitCode, Error> {
    let mut config = StudyConfig::load(path)?;
    if let Some(n) = samples {
        if n == 0 {
            return Err(Error::Config(vec![storage_adequacy::error::Violation::new(
                "/sizing/n_samples",
                "--samples must be at least 1",
            )]));
        }
        config.sizing.n_samples = n;
    }
    if let Some(s) = seed {
        config.sizing.base_seed = s;
    }
    if let Some(y) = years {
        config.restrict_years(y)?;
    }
    let study = config.build_study()?;
    let exec = threads.map_or_else(Execution::default, Execution::with_threads);
    if verbose {
        eprintln!(
            "running {} year(s) x {} samples, seed {}, {exec:?}",
            study.years.len(),
            study.sizing.n_samples,
            study.sizing.base_seed
        );
    }
    let started = Instant::now();
    let report = run_study(&study, exec)?;
    write_study_outputs(out, &report.result)?;
    if verbose {
        eprintln!("finished in {:.1?}", started.elapsed());
    }
    for y in &report.result.years {
        let cols: Vec<String> = report
            .result
            .categories
            .iter()
            .zip(&y.required_gw)
            .map(|(c, v)| format!("{c} {}", v.map_or("NA".into(), |v| format!("{v} GW"))))
            .collect();
        let overall = y.overall_gw.map_or("NA".into(), |v| format!("{v} GW"));
        println!("{}: {} | overall {overall}", y.year, cols.join(", "));
    }
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    Ok(if report.diagnostics.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_dispatch(
    path: &Path,
    trace: &Path,
    demand: Option<&Path>,
    capacity: f64,
    out: &Path,
    verify: bool,
    verbose: bool,
) -> Result<ExitCode, Error> {
    let config = StudyConfig::load(path)?;
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(Error::Parameter(format!("capacity must be non-negative, got {capacity}")));
    }
    let network = &config.network;
    let dt = config.dt_hours;
    let shortfall = read_wide_traces(trace, network, dt)?;
    let demand = match demand {
        Some(p) => read_wide_traces(p, network, dt)?,
        None => {
            let peak = config.years.first().map_or(0.0, |y| y.peak_demand_gw);
            let len = shortfall.first().map_or(0, |t| t.len());
            config
                .regional_weights
                .iter()
                .map(|w| TimeSeries::new(vec![w * peak; len], dt))
                .collect::<Result<_, _>>()?
        }
    };
    let fleet = build_fleet(capacity, &config.sizing, network)?;
    let outcome = simulate_year(&shortfall, &fleet, network, &config.params, &demand, true)?;
    std::fs::create_dir_all(out)?;
    write_wide_traces(&out.join("resultant.csv"), network, &outcome.resultant)?;
    let log = outcome.log.unwrap_or_default();
    write_dispatch_log(out, &log)?;
    if verbose {
        let unserved: f64 = outcome.resultant.iter().flat_map(|t| t.values()).sum::<f64>() * dt;
        eprintln!("{} steps, {} unit(s), unserved energy {unserved} GWh", log.len(), fleet.len());
    }
    if verify {
        let issues = verify_log(&shortfall, &fleet, network, &log);
        if !issues.is_empty() {
            for i in &issues {
                eprintln!("verify: {i}");
            }
            return Ok(ExitCode::from(1));
        }
        println!("verify: {} steps consistent", log.len());
    }
    Ok(ExitCode::SUCCESS)
}
