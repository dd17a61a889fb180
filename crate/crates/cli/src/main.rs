use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use transient_scope::commands::{self, Context};
use transient_scope::config::RunConfig;
use transient_scope::error::{CliError, CliResult};

/// Transient dynamics of discrete-time maps: orbits, transient times,
/// transient-center classification, searches, portraits and sweeps.
#[derive(Debug, Parser)]
#[command(name = "transient-scope", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (fig2, fig3, fig4, fig6, fig4b, fig7a).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Seed for every randomized step (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterate the map and write trajectories and plots.
    Simulate,
    /// Compute a (v, s)-transient time.
    TransientTime,
    /// Locate fixed points and classify them as transient centers.
    Classify,
    /// Escape profiles, transient-point scans or honeymoon scaling.
    Search,
    /// Augmented phase portrait of a planar model.
    Portrait,
    /// Parameter sweep over a Cartesian grid.
    Sweep,
    /// Model catalog.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Debug, Subcommand)]
enum ZooAction {
    /// All models with their default parameters.
    List,
    /// Full catalog entry of one model.
    Show {
        id: String,
        /// Parameter override `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
}

fn parse_param(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got '{text}'"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad value for {name}: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    match (&cli.config, &cli.preset) {
        (Some(path), None) => RunConfig::load(path),
        (None, Some(name)) => RunConfig::preset(name),
        (Some(_), Some(_)) => Err(CliError::Config("--config and --preset are mutually exclusive".into())),
        (None, None) => Err(CliError::Config("this command needs --config or --preset".into())),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Command::Zoo { action } = &cli.command {
        let json = match action {
            ZooAction::List => commands::zoo_list()?,
            ZooAction::Show { id, params } => commands::zoo_show(id, params)?,
        };
        transient_scope::emit!("{json}");
        return Ok(());
    }
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let cfg = load(cli)?;
    let ctx = Context::resolve(&cfg, cli.out.clone(), cli.seed, cli.jobs);
    let written = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &ctx)?,
        Command::TransientTime => commands::transient_time_cmd(&cfg, &ctx)?,
        Command::Classify => commands::classify_cmd(&cfg, &ctx)?,
        Command::Search => commands::search(&cfg, &ctx)?,
        Command::Portrait => commands::portrait(&cfg, &ctx)?,
        Command::Sweep => commands::sweep(&cfg, &ctx)?,
        Command::Zoo { .. } => unreachable!("handled above"),
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRANSIENT_SCOPE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}
