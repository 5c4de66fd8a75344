//! `retland` command-line driver.
//!
//! Every subcommand reads an optional TOML config, applies flag overrides,
//! and writes into `<out>/<subcommand>/` through a single [`out::OutDir`].
//! Analysis subcommands read checkpoints from `--ckpt` (files or
//! directories) or, by default, from `<out>/train/checkpoints`.

mod commands;
pub mod out;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use return_landscape::io::config::FamilyKind;
use return_landscape::io::ExperimentConfig;
use return_landscape::{Error, Result};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "retland", version, about = "Return-landscape analysis of control policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train TD3 and save checkpoints.
    Train(Opts),
    /// Post-update return distributions and scatter tables.
    Purd(Opts),
    /// Two-dimensional landscape slices with zoom levels.
    Map(Opts),
    /// Interpolation profiles and below-threshold proportions.
    Interpolate(Opts),
    /// Successful/failing trajectory pairs, race curves and LTP over buffer states.
    Failures(Opts),
    /// CVaR-based update rejection against the plain TD3 baseline.
    Stabilize(Opts),
    /// Behaviour-clone checkpoints and compare their distributions.
    Clone(Opts),
    /// Rank checkpoints by post-update CVaR.
    Rank(Opts),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub env: Option<String>,
    /// Output root; results go to `<out>/<subcommand>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint files or directories (repeatable).
    #[arg(long)]
    pub ckpt: Vec<PathBuf>,
    /// Samples per distribution (`stabilize`: samples per CVaR estimate).
    #[arg(long)]
    pub n: Option<usize>,
    /// CVaR level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Rejection tolerance.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Proposals per stabilizer run.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    #[arg(long)]
    pub range: Option<f64>,
    /// Perturbation scale (`interpolate`: per-point perturbation).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Update family: td3-minibatch, gaussian-perturbation or bc-minibatch.
    #[arg(long)]
    pub family: Option<String>,
    /// Pairs per condition.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Replay-buffer stride for LTP over states.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Environment steps per training run.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Independent training runs.
    #[arg(long)]
    pub runs: Option<usize>,
}

fn parse_family(s: &str) -> Result<FamilyKind> {
    serde_json::from_value(json!(s)).map_err(|_| Error::InvalidConfig(format!("unknown update family `{s}`")))
}

impl Opts {
    /// Loads the config file (or defaults) and applies the flag overrides.
    pub fn config(&self, command: &str) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.env {
            cfg.env = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.to_string_lossy().into_owned();
        }
        if let Some(v) = self.n {
            if command == "stabilize" {
                cfg.rejection.n_mc = v;
            } else {
                cfg.analysis.n = v;
            }
        }
        if let Some(v) = self.alpha {
            cfg.analysis.cvar_alpha = v;
            cfg.rejection.cvar_level = v;
        }
        if let Some(v) = self.delta {
            cfg.rejection.tolerance = v;
        }
        if let Some(v) = self.budget {
            cfg.rejection.budget = v;
        }
        if let Some(v) = self.grid_res {
            cfg.analysis.grid_res = v;
        }
        if let Some(v) = self.range {
            cfg.analysis.range = v;
        }
        if let Some(v) = self.sigma {
            if command == "interpolate" {
                cfg.analysis.interp_sigma = v;
            } else {
                cfg.update.sigma = v;
            }
        }
        if let Some(v) = &self.family {
            cfg.update.family = parse_family(v)?;
        }
        if let Some(v) = self.pairs {
            cfg.analysis.pairs = v;
        }
        if let Some(v) = self.stride {
            cfg.analysis.stride = v;
        }
        if let Some(v) = self.steps {
            cfg.learner.total_steps = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_record(command: &str, kind: &str, message: &str) -> String {
    json!({ "error": { "command": command, "kind": kind, "message": message } }).to_string()
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run_cli<S: AsRef<str>>(argv: &[S]) -> i32 {
    let argv: Vec<&str> = argv.iter().map(AsRef::as_ref).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let command = argv.get(1).copied().unwrap_or("");
            eprintln!("{}", error_record(command, "usage", e.to_string().trim()));
            return 2;
        }
    };
    let (name, opts) = match &cli.command {
        Command::Train(o) => ("train", o),
        Command::Purd(o) => ("purd", o),
        Command::Map(o) => ("map", o),
        Command::Interpolate(o) => ("interpolate", o),
        Command::Failures(o) => ("failures", o),
        Command::Stabilize(o) => ("stabilize", o),
        Command::Clone(o) => ("clone", o),
        Command::Rank(o) => ("rank", o),
    };
    match commands::run(name, opts) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(name, e.kind(), &e.to_string()));
            1
        }
    }
}
