//! `eprsim` command-line workflows: simulate detection frames, analyze event
//! files, scan the delay dependence and tabulate the model.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{load_document, parse_config, parse_override, parse_tau_list, set_path, RunConfig};
use eprsim_core::Basis;
pub use error::CliError;
use serde_json::{json, Value};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "eprsim", version, about = "Photon/spin-wave EPR entanglement simulator and analyzer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate detection frames and write one events file per delay and basis.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Which basis to simulate.
        #[arg(long, value_enum, default_value_t = BasisChoice::Both)]
        basis: BasisChoice,
    },
    /// Reconstruct coincidence maps, composite variances and the report from events files.
    Analyze {
        /// Events files; near- and far-field runs may be mixed.
        #[arg(required = true)]
        events: Vec<PathBuf>,
        /// Optional config supplying analysis settings and the output directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Simulate and analyze every delay, side by side with the model.
    Scan {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Tabulate model curves over a delay range.
    Theory {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated delays in us; overrides the range flags.
        #[arg(long)]
        tau: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        tau_min: f64,
        #[arg(long, default_value_t = 9.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 0.25)]
        tau_step: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisChoice {
    Near,
    Far,
    Both,
}

impl BasisChoice {
    pub fn bases(self) -> Vec<Basis> {
        match self {
            BasisChoice::Near => vec![Basis::Position],
            BasisChoice::Far => vec![Basis::Momentum],
            BasisChoice::Both => vec![Basis::Position, Basis::Momentum],
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set detector.dark_rate=0.5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// Bins per composite histogram.
    #[arg(long)]
    pub bins: Option<u64>,
    /// Frame shift used for the accidental background.
    #[arg(long)]
    pub shift: Option<u64>,
    /// Maximum bins per axis of the coincidence maps.
    #[arg(long)]
    pub maps: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated delays in us.
    #[arg(long)]
    pub tau: Option<String>,
    /// Frames per delay and basis.
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn apply_overrides(doc: &mut Value, analysis: &AnalysisArgs, common: &CommonArgs) -> Result<(), CliError> {
    for spec in &common.overrides {
        let (path, value) = parse_override(spec)?;
        set_path(doc, &path, value)?;
    }
    if let Some(b) = analysis.bins {
        set_path(doc, "analysis.bins", json!(b))?;
    }
    if let Some(s) = analysis.shift {
        set_path(doc, "analysis.shift", json!(s))?;
    }
    if let Some(m) = analysis.maps {
        set_path(doc, "analysis.map_bins", json!(m))?;
    }
    if let Some(out) = &common.out {
        set_path(doc, "output.dir", json!(out.to_string_lossy()))?;
    }
    Ok(())
}

/// Loads the config named by `args` with all command-line overrides applied.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut doc = load_document(&args.config)?;
    apply_overrides(&mut doc, &args.analysis, &args.common)?;
    if let Some(t) = &args.tau {
        set_path(&mut doc, "schedule.tau", json!(parse_tau_list(t)?))?;
    }
    if let Some(f) = args.frames {
        set_path(&mut doc, "schedule.frames", json!(f))?;
    }
    if let Some(s) = args.seed {
        set_path(&mut doc, "seed", json!(s))?;
    }
    parse_config(doc)
}

/// Caps the global thread pool at `EPRSIM_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EPRSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("EPRSIM_THREADS must be a positive integer, got `{raw}`")))?;
    // A pool may already exist when embedded; the cap then cannot change.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate { run, basis } => {
            let cfg = resolve_run_config(&run)?;
            commands::simulate::run(&cfg, &basis.bases())
        }
        Command::Analyze {
            events,
            config,
            analysis,
            common,
        } => {
            let (settings, out) = match config {
                Some(path) => {
                    let mut doc = load_document(&path)?;
                    apply_overrides(&mut doc, &analysis, &common)?;
                    let cfg = parse_config(doc)?;
                    (cfg.analysis, cfg.output_dir)
                }
                None => {
                    // Validate flags through the same path as config values.
                    let mut doc = json!({});
                    apply_overrides(&mut doc, &analysis, &common)?;
                    let settings = config::parse_analysis_only(&doc)?;
                    (settings, common.out.clone().unwrap_or_else(|| PathBuf::from(".")))
                }
            };
            commands::analyze::run(&events, &settings, &out)
        }
        Command::Scan { run } => {
            let cfg = resolve_run_config(&run)?;
            commands::scan::run(&cfg)
        }
        Command::Theory {
            config,
            tau,
            tau_min,
            tau_max,
            tau_step,
            common,
        } => {
            let mut doc = load_document(&config)?;
            apply_overrides(&mut doc, &AnalysisArgs::default(), &common)?;
            let cfg = parse_config(doc)?;
            let taus = match tau {
                Some(t) => parse_tau_list(&t)?,
                None => commands::theory::tau_range(tau_min, tau_max, tau_step)?,
            };
            commands::theory::run(&cfg, &taus)
        }
    }
}
