//! Command-line front end: `run`, `ablate` and `gen`.
//!
//! Exit codes: 0 on success, 1 for config or input-data errors, 2 when a run
//! fails after its inputs were accepted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::datagen::{generate_logged_campaign, ScenarioSpec};
use crate::error::{Error, Result};
use crate::experiment::{run_ablation, run_experiment, ExperimentConfig, ExperimentReport};
use crate::sim::write_logged_csv;

#[derive(Debug, Parser)]
#[command(name = "adbudget", version, about = "Ad budget allocation simulator and bandit policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every (policy, seed) pair of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Keep only these policies (by name or variant label).
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
    },
    /// Run the four TUCB-MAE ablation arms.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Generate a logged-data CSV from a scenario spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Which stage failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

fn load_config(
    path: &Path,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    policies: Option<Vec<String>>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    if let Some(keep) = policies {
        for k in &keep {
            if !cfg
                .policies
                .iter()
                .any(|p| &cfg.policy_name(p) == k || p.variant.is_some_and(|v| v.label() == k))
            {
                return Err(Error::Config(format!("--policies: `{k}` is not in the config")));
            }
        }
        let names: Vec<String> = cfg.policies.iter().map(|p| cfg.policy_name(p)).collect();
        let mut i = 0;
        cfg.policies.retain(|p| {
            let label = p.variant.map(|v| v.label());
            let hit = keep.iter().any(|k| k == &names[i] || Some(k.as_str()) == label);
            i += 1;
            hit
        });
    }
    cfg.validate()?;
    // surface data errors as config errors before any run starts
    cfg.load_records()?;
    Ok(cfg)
}

fn print_summary(report: &ExperimentReport) {
    println!("{:<22} {:>5} {:>22} {:>22} {:>16}", "policy", "runs", "clicks", "regret", "cpc");
    for r in &report.summary {
        let cpc = match (r.cpc_mean, r.cpc_std) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "-".to_string(),
        };
        println!(
            "{:<22} {:>5} {:>22} {:>22} {:>16}",
            r.policy,
            r.runs,
            format!("{:.1} ± {:.1}", r.clicks_mean, r.clicks_std),
            format!("{:.1} ± {:.1}", r.regret_mean, r.regret_std),
            cpc
        );
    }
    println!("wrote {}", report.output_dir.display());
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            policies,
        } => {
            let cfg = load_config(&config, out, seeds, policies).map_err(Failure::Config)?;
            let report = run_experiment(&cfg).map_err(Failure::Runtime)?;
            print_summary(&report);
        }
        Command::Ablate { config, out, seeds } => {
            let cfg = load_config(&config, out, seeds, None).map_err(Failure::Config)?;
            let report = run_ablation(&cfg).map_err(Failure::Runtime)?;
            print_summary(&report);
        }
        Command::Gen { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Failure::Config(Error::io(&spec, e)))?;
            let spec: ScenarioSpec = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(Error::Config(format!("{}: {e}", spec.display()))))?;
            let records = generate_logged_campaign(&spec).map_err(Failure::Config)?;
            write_logged_csv(&out, &records).map_err(Failure::Runtime)?;
            println!("wrote {} rows to {}", records.len(), out.display());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
