//! `rssac` command-line front end: single episodes, benchmarks and
//! parameter sweeps.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rssac::sim::{run_benchmark, run_episode, run_sweep, BenchmarkOptions, SweepParameter};

use config::{ControllerKind, RunConfig};
use output::Metrics;

/// Caps the number of worker threads.
const WORKERS_ENV: &str = "RSSAC_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "rssac",
    version,
    about = "Risk-sensitive crowd navigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one seeded episode.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum)]
        controller: Option<ControllerKind>,
    },
    /// Benchmark controllers over many seeded runs.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Seeded runs per controller.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Comma-separated controller list.
        #[arg(long, value_enum, value_delimiter = ',')]
        controller: Vec<ControllerKind>,
    },
    /// One RSSAC benchmark per value of σ, α or λ.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seeded runs per controller.
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated risk sensitivities.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["alpha", "lambda"])]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', conflicts_with = "lambda")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    Ok(config)
}

fn set_sigma(config: &mut RunConfig, sigma: Option<f64>) -> Result<()> {
    if let Some(s) = sigma {
        config.rssac.sigma = s;
    }
    config.validate()
}

fn options(config: &RunConfig) -> BenchmarkOptions {
    BenchmarkOptions {
        runs: config.runs,
        master_seed: config.seed,
        goal_radius: config.goal_radius(),
    }
}

fn cmd_run(common: Common, sigma: Option<f64>, controller: Option<ControllerKind>) -> Result<()> {
    let mut config = load(&common)?;
    set_sigma(&mut config, sigma)?;
    let kind = controller.unwrap_or(config.controllers[0]);
    let scenario = config.scenario()?;
    let controller = config.controller(kind)?;
    let result = run_episode(&scenario, controller.as_ref(), config.seed)?;
    let dir = output::prepare(&config)?;
    output::write_json(
        &dir.join("episode.json"),
        &output::EpisodeRecord::new(&result, None),
    )?;
    if config.output.state_log {
        output::write_state_log(&dir.join("states.csv"), &result)?;
    }
    println!("{}", output::summary(&result));
    if let Some(err) = &result.failed {
        bail!("controller failed: {err}");
    }
    Ok(())
}

fn cmd_bench(
    common: Common,
    runs: Option<usize>,
    sigma: Option<f64>,
    controllers: Vec<ControllerKind>,
) -> Result<()> {
    let mut config = load(&common)?;
    if let Some(r) = runs {
        config.runs = r;
    }
    if !controllers.is_empty() {
        config.controllers = controllers;
    }
    set_sigma(&mut config, sigma)?;
    let scenario = config.scenario()?;
    let built = config
        .controllers
        .iter()
        .map(|k| config.controller(*k))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = built.iter().map(|c| c.as_ref()).collect();
    let report = run_benchmark(&scenario, &refs, &options(&config))?;
    let dir = output::prepare(&config)?;
    let rows: Vec<_> = report.stats.iter().map(|s| (None, s)).collect();
    output::write_table(&dir.join("bench.tsv"), None, &rows, Metrics::Outcomes)?;
    output::write_table(&dir.join("timing.tsv"), None, &rows, Metrics::Timing)?;
    let records = report
        .episodes
        .iter()
        .flatten()
        .map(|e| output::EpisodeRecord::new(e, None));
    output::write_jsonl(&dir.join("episodes.jsonl"), records)?;
    for s in &report.stats {
        println!("{}", output::stats_line(s));
    }
    Ok(())
}

fn cmd_sweep(
    common: Common,
    runs: Option<usize>,
    sigma: Vec<f64>,
    alpha: Vec<f64>,
    lambda: Vec<f64>,
) -> Result<()> {
    let mut config = load(&common)?;
    if let Some(r) = runs {
        config.runs = r;
    }
    config.validate()?;
    let (parameter, name, values) = if !sigma.is_empty() {
        (SweepParameter::Sigma, "sigma", sigma)
    } else if !alpha.is_empty() {
        (SweepParameter::Alpha, "alpha", alpha)
    } else if !lambda.is_empty() {
        (SweepParameter::Lambda, "lambda", lambda)
    } else {
        bail!("sweep needs one of --sigma, --alpha or --lambda");
    };
    let base = config.rssac_config()?;
    for v in &values {
        parameter
            .apply(&base, *v)
            .validate()
            .with_context(|| format!("invalid {name} value {v}"))?;
    }
    let scenario = config.scenario()?;
    let points = run_sweep(&scenario, &base, parameter, &values, &options(&config))?;
    let dir = output::prepare(&config)?;
    let rows: Vec<_> = points.iter().map(|p| (Some(p.value), &p.stats)).collect();
    output::write_table(&dir.join("sweep.tsv"), Some(name), &rows, Metrics::Outcomes)?;
    output::write_table(&dir.join("timing.tsv"), Some(name), &rows, Metrics::Timing)?;
    let records = points.iter().flat_map(|p| {
        p.episodes
            .iter()
            .map(|e| output::EpisodeRecord::new(e, Some((name, p.value))))
    });
    output::write_jsonl(&dir.join("episodes.jsonl"), records)?;
    for p in &points {
        println!("{name}={} {}", p.value, output::stats_line(&p.stats));
    }
    Ok(())
}

fn init_workers() -> Result<()> {
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        let n: usize = value
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{value}`"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_workers().and_then(|()| match cli.command {
        Command::Run {
            common,
            sigma,
            controller,
        } => cmd_run(common, sigma, controller),
        Command::Bench {
            common,
            runs,
            sigma,
            controller,
        } => cmd_bench(common, runs, sigma, controller),
        Command::Sweep {
            common,
            runs,
            sigma,
            alpha,
            lambda,
        } => cmd_sweep(common, runs, sigma, alpha, lambda),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
