mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "phonelearn", version, about = "Phone category learning experiments")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// WAV files + phone alignments -> frame feature table.
    Extract(ExtractArgs),
    /// Random train/test split of a feature table.
    Split(SplitArgs),
    /// Sample Gaussian training sets from per-phone moments.
    Gaussian(GaussianArgs),
    /// Train one learner on a feature table.
    Train(TrainArgs),
    /// Score a trained learner on test features.
    Eval(EvalArgs),
    /// Repeated learning sessions and their spread.
    Consistency(ConsistencyArgs),
    /// Ward dendrogram of learned phone profiles with bootstrap support.
    Cluster(ClusterArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Split(_) => "split",
            Command::Gaussian(_) => "gaussian",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Consistency(_) => "consistency",
            Command::Cluster(_) => "cluster",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Extract(a) => a.apply(cfg),
            Command::Split(a) => a.apply(cfg),
            Command::Gaussian(a) => a.apply(cfg),
            Command::Train(a) => a.apply(cfg),
            Command::Eval(a) => a.apply(cfg),
            Command::Consistency(a) => a.apply(cfg),
            Command::Cluster(a) => a.apply(cfg),
        }
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
    if value.is_some() {
        *slot = value.clone();
    }
}

#[derive(Args)]
struct EclArgs {
    #[arg(long)]
    learning_rate: Option<f64>,
    /// TD discount; 0 reduces TD to WH.
    #[arg(long)]
    discount: Option<f64>,
}

impl EclArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.ecl.learning_rate, &self.learning_rate);
        set(&mut cfg.ecl.discount, &self.discount);
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Tab-separated word_id, phone, start, end (seconds).
    #[arg(long)]
    alignments: Option<PathBuf>,
}

impl ExtractArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.audio_dir, &self.audio_dir);
        set_opt(&mut cfg.paths.alignments, &self.alignments);
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

impl SplitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.features, &self.features);
        set(&mut cfg.test_fraction, &self.test_fraction);
    }
}

#[derive(Args)]
struct GaussianArgs {
    /// Training feature table the moments are taken from.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Frames per phone, one dataset each.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
}

impl GaussianArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.features, &self.features);
        set(&mut cfg.gaussian_sizes, &self.sizes);
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    /// wh, td or mbl.
    #[arg(long)]
    learner: Option<String>,
    /// Label for the training data: raw, gaussian, gaussian-nN, ...
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    ecl: EclArgs,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.features, &self.features);
        set_opt(&mut cfg.learner, &self.learner);
        set(&mut cfg.regime, &self.regime);
        set(&mut cfg.mbl.k, &self.k);
        self.ecl.apply(cfg);
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Weight CSV (WH/TD) or store manifest JSON (MBL).
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.state, &self.state);
        set_opt(&mut cfg.paths.test, &self.test);
        set_opt(&mut cfg.learner, &self.learner);
        set(&mut cfg.regime, &self.regime);
        set(&mut cfg.mbl.k, &self.k);
    }
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    test_words: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    ecl: EclArgs,
}

impl ConsistencyArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.features, &self.features);
        set(&mut cfg.session.n_sessions, &self.sessions);
        set(&mut cfg.session.vocab_size, &self.vocab_size);
        set(&mut cfg.session.replications, &self.replications);
        set(&mut cfg.session.test_words, &self.test_words);
        set(&mut cfg.mbl.k, &self.k);
        self.ecl.apply(cfg);
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// WH/TD weight CSV.
    #[arg(long, conflicts_with = "profiles")]
    state: Option<PathBuf>,
    /// MBL vote-share profiles written by `eval`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    learner: Option<String>,
    /// Bootstrap replicates per scale; 0 skips the p-values.
    #[arg(long)]
    n_boot: Option<usize>,
    #[arg(long)]
    drop_zero_profiles: bool,
}

impl ClusterArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.state, &self.state);
        set_opt(&mut cfg.paths.profiles, &self.profiles);
        if self.state.is_some() {
            cfg.paths.profiles = None;
        }
        set_opt(&mut cfg.learner, &self.learner);
        set(&mut cfg.bootstrap.n_boot, &self.n_boot);
        cfg.drop_zero_profiles |= self.drop_zero_profiles;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, &cli.seed);
    set_opt(&mut cfg.paths.out_dir, &cli.out_dir);
    set_opt(&mut cfg.threads, &cli.threads);
    cli.command.apply(&mut cfg);
    anyhow::ensure!(cfg.seed <= i64::MAX as u64, "seed must be below 2^63");
    cfg.derive_stage_seeds();
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match &cli.command {
        Command::Extract(_) => commands::extract(&cfg),
        Command::Split(_) => commands::split(&cfg),
        Command::Gaussian(_) => commands::gaussian(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Consistency(_) => commands::consistency(&cfg),
        Command::Cluster(_) => commands::cluster(&cfg),
    }
}

fn error_line(command: &str, message: &str) {
    let line = serde_json::json!({ "status": "error", "command": command, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            error_line("", &e.kind().to_string());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(cli.command.name(), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
