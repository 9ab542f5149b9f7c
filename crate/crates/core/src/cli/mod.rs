//! The `tdpmix` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
//! error. Every output directory is staged and moved into place only after
//! the command succeeds.

mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(crate::Error),
    Runtime(crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Runtime(e) => write!(f, "runtime error: {e}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "tdpmix", version, about = "Joint alignment and clustering with transformed DP mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align one collection to a single shared component.
    Ba(RunArgs),
    /// Jointly align and cluster.
    Jac(JacArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Score a clustering and/or an alignment.
    Eval(EvalArgs),
    /// Save a fitted model's statistics or assign new items with one.
    #[command(subcommand)]
    Checkpoint(CheckpointCommand),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Key-value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset (file or PGM directory).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// csv-curves, csv-points, pgm-dir or idx (guessed when omitted).
    #[arg(long)]
    format: Option<String>,
    /// Ground-truth labels (IDX labels for IDX input, else one per line).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transformation family.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only items with this label.
    #[arg(long)]
    class: Option<usize>,
    /// Any setting as KEY=VALUE (hyperparameters included); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct JacArgs {
    #[command(flatten)]
    run: RunArgs,
    /// 1 = blocked optimization, 2 = importance sampling.
    #[arg(long)]
    sampler: Option<String>,
    /// Proposals per item for sampler 2.
    #[arg(long = "L")]
    samples: Option<usize>,
    /// mode or predictive.
    #[arg(long)]
    plug_in: Option<String>,
    #[arg(long)]
    gamma_init: Option<f64>,
    /// `item,label` lines seeding one locked cluster per label, or `none`.
    #[arg(long)]
    seeds: Option<String>,
    /// Times each seed item is counted.
    #[arg(long)]
    replication: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Use the snapshot map/reduce schedule.
    #[arg(long)]
    parallel: bool,
    /// Checkpoint file to write (jac, checkpoint save) or read (checkpoint load).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CheckpointCommand {
    /// Fit like `jac`, then write the cluster statistics to --checkpoint.
    Save(JacArgs),
    /// Assign the items of --in using the clusters stored in --checkpoint.
    Load(JacArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    /// Warped copies of base curves.
    Curves,
    /// Two groups of points on concentric rings.
    Points,
}

#[derive(Args, Debug)]
struct SynthArgs {
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    /// Items per base curve or per point group.
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 0.3)]
    magnitude: f64,
    /// Noise std as a fraction of each base's value range.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV of base curves (one per row) instead of the built-in four.
    #[arg(long)]
    bases: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted labels, one per line.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth labels.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Aligned items to score.
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn settings(&self) -> Vec<(String, String)> {
        let mut s = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("in", path(&self.input));
        push("format", self.format.clone());
        push("labels", path(&self.labels));
        push("out", path(&self.out));
        push("family", self.family.clone());
        push("iters", self.iters.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("class", self.class.map(|v| v.to_string()));
        s
    }

    fn resolve(&self, extra: Vec<(String, String)>) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(CliError::Config)?;
        }
        for (k, v) in self.settings().into_iter().chain(extra) {
            cfg.set(&k, &v).map_err(CliError::Config)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v).map_err(CliError::Config)?;
        }
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

impl JacArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut extra = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                extra.push((k.to_string(), v));
            }
        };
        push("sampler", self.sampler.clone());
        push("L", self.samples.map(|v| v.to_string()));
        push("plug-in", self.plug_in.clone());
        push("gamma-init", self.gamma_init.map(|v| v.to_string()));
        push("seeds", self.seeds.clone());
        push("replication", self.replication.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        push("parallel", self.parallel.then(|| "true".to_string()));
        push("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        self.run.resolve(extra)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ba(args) => commands::ba(&args.resolve(Vec::new())?),
        Command::Jac(args) => commands::jac(&args.resolve()?, commands::JacMode::Fit),
        Command::Checkpoint(CheckpointCommand::Save(args)) => {
            commands::jac(&args.resolve()?, commands::JacMode::Save)
        }
        Command::Checkpoint(CheckpointCommand::Load(args)) => {
            commands::jac(&args.resolve()?, commands::JacMode::Load)
        }
        Command::Synth(args) => commands::synth(&args),
        Command::Eval(args) => commands::eval(&args),
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tdpmix: {e}");
            e.exit_code()
        }
    }
}
