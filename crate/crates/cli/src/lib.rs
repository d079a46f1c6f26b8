//! `triage` command line: one subcommand per pipeline stage plus `pipeline`
//! for the whole chain. Exit codes are 0 on success, 1 on data errors and 2
//! on usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use triage_core::features::FeatureGroup;
use triage_core::learn::EnsembleKind;
use triage_core::phantom::Profile;

mod commands;
pub mod config;

pub use config::{Overrides, RunConfig, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        #[source]
        source: triage_core::Error,
    },
}

impl CliError {
    pub fn data(stage: &'static str, source: triage_core::Error) -> Self {
        CliError::Data { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "CT feature extraction and COVID-19 triage classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct CommonArgs {
    /// Case or corpus manifest.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Feature table CSV.
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Cross-validation folds.
    #[arg(long, value_name = "K")]
    folds: Option<usize>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, value_name = "adaboost-dt|rf", value_parser = config::parse_kind)]
    model: Option<EnsembleKind>,
    #[arg(long, value_name = "N")]
    n_estimators: Option<usize>,
    #[arg(long, value_name = "F")]
    learning_rate: Option<f64>,
    #[arg(long, value_name = "N")]
    max_depth: Option<usize>,
    #[arg(long, value_name = "N")]
    min_samples_split: Option<usize>,
    /// Feature group to leave out; repeatable.
    #[arg(long = "mask-group", value_name = "NAME", value_parser = config::parse_group)]
    mask_group: Vec<FeatureGroup>,
}

#[derive(Debug, Clone, Default, Args)]
struct PhantomArgs {
    /// Number of cases.
    #[arg(long = "n", value_name = "N")]
    n: Option<usize>,
    /// Share of covid-like cases.
    #[arg(long, value_name = "F")]
    covid_fraction: Option<f64>,
    #[arg(long, value_name = "mixed|peripheral-only", value_parser = config::parse_profile)]
    profile: Option<Profile>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Phantom {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        phantom: PhantomArgs,
    },
    /// Check every case of a manifest.
    Validate(CommonArgs),
    /// Compute the feature table of a manifest.
    Extract(CommonArgs),
    /// Fit one model on the whole feature table.
    Train(CommonArgs),
    /// Stratified k-fold cross-validation.
    Evaluate(CommonArgs),
    /// Coarse then fine hyper-parameter grid search.
    Grid(CommonArgs),
    /// Cross-validation with each feature group masked in turn.
    Ablate(CommonArgs),
    /// Gini importance across fold models.
    Importance(CommonArgs),
    /// Per-class density curves of selected features.
    Kde(CommonArgs),
    /// Every stage in order, reusing an existing feature table.
    Pipeline(CommonArgs),
}

impl Command {
    fn args(&self) -> (&CommonArgs, Option<&PhantomArgs>) {
        match self {
            Command::Phantom { common, phantom } => (common, Some(phantom)),
            Command::Validate(c)
            | Command::Extract(c)
            | Command::Train(c)
            | Command::Evaluate(c)
            | Command::Grid(c)
            | Command::Ablate(c)
            | Command::Importance(c)
            | Command::Kde(c)
            | Command::Pipeline(c) => (c, None),
        }
    }
}

fn flag_overrides(c: &CommonArgs, p: Option<&PhantomArgs>) -> Overrides {
    let p = p.cloned().unwrap_or_default();
    Overrides {
        seed: c.seed,
        folds: c.folds,
        jobs: c.jobs,
        model: c.model,
        n_estimators: c.n_estimators,
        learning_rate: c.learning_rate,
        max_depth: c.max_depth,
        min_samples_split: c.min_samples_split,
        mask_groups: (!c.mask_group.is_empty()).then(|| c.mask_group.clone()),
        manifest: c.manifest.clone(),
        features: c.features.clone(),
        out: c.out.clone(),
        n: p.n,
        covid_fraction: p.covid_fraction,
        profile: p.profile,
    }
}

fn run(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let (common, phantom) = cli.command.args();
    let cfg = RunConfig::resolve(&flag_overrides(common, phantom), common.config.as_deref(), env)?;
    let jobs = cfg.jobs;
    let ctx = commands::Ctx { cfg };
    let body = || match &cli.command {
        Command::Phantom { .. } => commands::phantom(&ctx),
        Command::Validate(_) => commands::validate(&ctx),
        Command::Extract(_) => commands::extract(&ctx),
        Command::Train(_) => commands::train(&ctx),
        Command::Evaluate(_) => commands::evaluate(&ctx),
        Command::Grid(_) => commands::grid(&ctx),
        Command::Ablate(_) => commands::ablate(&ctx),
        Command::Importance(_) => commands::importance(&ctx),
        Command::Kde(_) => commands::kde(&ctx),
        Command::Pipeline(_) => commands::pipeline(&ctx),
    };
    match jobs {
        None => body(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(body),
    }
}

/// Parse `argv` (program name first), run the subcommand and return the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch_with_env(argv, &|k| std::env::var(k).ok())
}

/// Like [`dispatch`], reading `TRIAGE_*` variables through `env`.
pub fn dispatch_with_env<I, T>(argv: I, env: &dyn Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
