//! Command-line front end: `generate-data`, `train`, `sweep`, `evaluate`
//! and `report`.
//!
//! Settings come from an optional TOML run config, then command-line flags
//! on top. Each command writes the resolved config as
//! `resolved_config.toml` next to its outputs.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or config error,
//! 3 data or checkpoint error, 4 training divergence.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, Split, SplitSpec, TEST_SIZES};
use crate::eval::{self, EvalConfig, EvalError, HeuristicSource};
use crate::graph::Family;
use crate::model::{ModelConfig, ModelError, ModelParameters};
use crate::report::{self, ReportError, ReportFormat};
use crate::sweep::{self, SearchSpace};
use crate::training::{self, TrainConfig, TrainError};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "NAR_ASTAR_DATA_DIR";
pub const CONFIG_VERSION: u32 = 1;
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const SWEEP_FILE: &str = "sweep.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Train(TrainError::DivergenceDetected { .. }) => 4,
            CliError::Dataset(_) | CliError::Model(_) | CliError::Report(_) => 3,
            CliError::Eval(
                EvalError::Dataset(_) | EvalError::Model(_) | EvalError::MissingModel,
            ) => 3,
            CliError::Train(TrainError::Model(_) | TrainError::EmptyDataset(_)) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Which splits to build or evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub families: Vec<Family>,
    pub sizes: Vec<usize>,
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            sizes: TEST_SIZES.to_vec(),
            train_count: dataset::TRAIN_COUNT,
            validation_count: dataset::VALIDATION_COUNT,
            test_count: dataset::TEST_COUNT,
        }
    }
}

impl DataSection {
    pub fn plan(&self) -> Vec<SplitSpec> {
        let mut plan = vec![
            SplitSpec {
                count: self.train_count,
                ..SplitSpec::train()
            },
            SplitSpec {
                count: self.validation_count,
                ..SplitSpec::validation()
            },
        ];
        plan.extend(self.test_specs());
        plan
    }

    pub fn test_specs(&self) -> Vec<SplitSpec> {
        let mut specs = Vec::new();
        for &family in &self.families {
            for &n in &self.sizes {
                specs.push(SplitSpec {
                    count: self.test_count,
                    ..SplitSpec::test(family, n)
                });
            }
        }
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub level: u8,
    pub budget: usize,
    /// Epoch cap per trial; overrides `train.max_epochs` during a sweep.
    pub max_epochs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            level: 1,
            budget: 20,
            max_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub heuristics: Vec<HeuristicSource>,
    pub trials: usize,
    pub timing_reps: usize,
    /// Checkpoint reused by every trial; trials then differ only in the
    /// random baseline's seeds and in timing. Without one, and with
    /// `retrain_per_trial`, one model per trial is trained first.
    pub checkpoint: Option<PathBuf>,
    pub retrain_per_trial: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            heuristics: vec![
                HeuristicSource::Learnt,
                HeuristicSource::Zero,
                HeuristicSource::Random,
            ],
            trials: 5,
            timing_reps: 5,
            checkpoint: None,
            retrain_per_trial: true,
        }
    }
}

/// The declarative run config. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    /// Worker threads; 0 means available parallelism.
    pub threads: usize,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            threads: 0,
            data_dir: None,
            out_dir: None,
            data: DataSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if config.version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                config.version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("config cannot be written as TOML: {e}")))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn out_dir(&self, command: &str) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(command))
    }

    fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(io_err(&path))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nar-astar",
    version,
    about = "Learnt A* heuristics from neural algorithmic reasoning on Dijkstra"
)]
pub struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset directory [default: $NAR_ASTAR_DATA_DIR, else ./data].
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Output directory [default: runs/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the training, validation and test splits.
    GenerateData(DataArgs),
    /// Train one model on the training split.
    Train(TrainArgs),
    /// Random search over hyperparameters.
    Sweep(SweepArgs),
    /// Run A* with learnt, zero and random fields on the test splits.
    Evaluate(EvalArgs),
    /// Re-emit report files from a stored report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Test families, comma separated (sparse, dense, very-dense).
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<Family>>,
    /// Test sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Latent width (also used for the MLP hidden width).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Penalise the excess over the arc weight on violated arcs.
    #[arg(long)]
    pub hinge: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Search level: 1 (broad) or 2 (narrow).
    #[arg(long)]
    pub level: Option<u8>,
    /// Number of sampled configs.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Epoch cap per trial.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint used by every trial.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Heuristic sources, comma separated (learnt, zero, random).
    #[arg(long, value_delimiter = ',')]
    pub heuristic: Option<Vec<HeuristicSource>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Timing repetitions per call; the median is reported.
    #[arg(long)]
    pub timing_reps: Option<usize>,
    /// Train a fresh model per trial instead of reusing one checkpoint.
    #[arg(long)]
    pub retrain_per_trial: bool,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    /// csv, json or all.
    #[arg(long, default_value = "all")]
    pub format: String,
}

impl DataArgs {
    fn apply(&self, data: &mut DataSection) {
        if let Some(f) = &self.families {
            data.families = f.clone();
        }
        if let Some(s) = &self.sizes {
            data.sizes = s.clone();
        }
    }
}

impl ModelArgs {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(h) = self.hidden {
            config.model.hidden_dim = h;
            config.model.mlp_hidden = h;
        }
        let m = &mut config.model;
        m.lambda = self.lambda.unwrap_or(m.lambda);
        m.learning_rate = self.lr.unwrap_or(m.learning_rate);
        m.weight_decay = self.weight_decay.unwrap_or(m.weight_decay);
        m.hinge_penalty |= self.hinge;
        let t = &mut config.train;
        t.max_epochs = self.epochs.unwrap_or(t.max_epochs);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.patience = self.patience.unwrap_or(t.patience);
    }
}

/// Merge the config file, environment and flags into one [`RunConfig`].
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if let Some(dir) = &cli.data_dir {
        config.data_dir = Some(dir.clone());
    } else if config.data_dir.is_none() {
        config.data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }
    match &cli.command {
        Command::GenerateData(args) => args.apply(&mut config.data),
        Command::Train(args) => args.model.apply(&mut config),
        Command::Sweep(args) => {
            config.sweep.level = args.level.unwrap_or(config.sweep.level);
            config.sweep.budget = args.budget.unwrap_or(config.sweep.budget);
            config.sweep.max_epochs = args.epochs.unwrap_or(config.sweep.max_epochs);
        }
        Command::Evaluate(args) => {
            let e = &mut config.eval;
            if let Some(h) = &args.heuristic {
                e.heuristics = h.clone();
            }
            e.trials = args.trials.unwrap_or(e.trials);
            e.timing_reps = args.timing_reps.unwrap_or(e.timing_reps);
            if args.checkpoint.is_some() {
                e.checkpoint = args.checkpoint.clone();
                e.retrain_per_trial = false;
            }
            e.retrain_per_trial |= args.retrain_per_trial;
            args.data.apply(&mut config.data);
        }
        Command::Report(_) => {}
    }
    // The model seed follows the master seed so one number reproduces a run.
    config.model.seed = config.seed;
    config
        .model
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if config.seed > i64::MAX as u64 {
        return Err(CliError::Usage("--seed must fit in 63 bits".into()));
    }
    Ok(config)
}

fn load_split(dir: &Path, name: &str) -> Result<Split, CliError> {
    let path = dataset::split_path(dir, name);
    if !path.exists() {
        return Err(CliError::Dataset(DatasetError::Malformed {
            path: path.clone(),
            reason: "missing; run `generate-data` first".into(),
        }));
    }
    Ok(dataset::read_split(&path)?)
}

fn write_jsonl<T: Serialize>(
    out: &mut impl std::io::Write,
    path: &Path,
    value: &T,
) -> Result<(), CliError> {
    let line =
        serde_json::to_string(value).map_err(|e| CliError::Usage(format!("serialisation: {e}")))?;
    writeln!(out, "{line}").map_err(io_err(path))
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogRecord<'a> {
    Epoch(&'a training::EpochRecord),
    Summary {
        best_epoch: usize,
        best_score: f64,
        stopped_early: bool,
        epochs_run: usize,
        checkpoint: &'a Path,
    },
    Trial(&'a sweep::SweepResult),
}

fn generate_data(config: &RunConfig) -> Result<(), CliError> {
    let dir = config.data_dir();
    for spec in config.data.plan() {
        let split = dataset::build_split(&spec, config.seed)?;
        let path = dataset::write_split(&dir, &split)?;
        log::info!(
            "wrote {} ({} instances)",
            path.display(),
            split.instances.len()
        );
    }
    config.write_resolved(&dir)
}

fn training_sets(
    config: &RunConfig,
) -> Result<(Vec<training::TrainingSample>, Vec<training::TrainingSample>), CliError> {
    let dir = config.data_dir();
    let train = load_split(&dir, "train")?;
    let validation = load_split(&dir, "validation")?;
    Ok((
        training::prepare(&train.instances),
        training::prepare(&validation.instances),
    ))
}

/// Train one model, writing the checkpoint and the epoch log into `out`.
fn train_into(
    config: &RunConfig,
    model: &ModelConfig,
    out: &Path,
) -> Result<ModelParameters, CliError> {
    let (train_set, validation_set) = training_sets(config)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log_file =
        std::io::BufWriter::new(std::fs::File::create(&log_path).map_err(io_err(&log_path))?);
    let mut write_error = None;
    let result = training::train(
        model,
        &config.train,
        &train_set,
        &validation_set,
        |record| {
            log::info!(
                "epoch {} loss {:.5} constraints {:.4} score {:.5}",
                record.epoch,
                record.train_loss.total,
                record.validation.constraint_fraction,
                record.validation.score
            );
            if let Err(e) = write_jsonl(&mut log_file, &log_path, &LogRecord::Epoch(record)) {
                write_error.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_error {
        return Err(e);
    }
    let (params, report) = result?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    params.save(&checkpoint)?;
    let summary = LogRecord::Summary {
        best_epoch: report.best_epoch,
        best_score: report.best_score,
        stopped_early: report.stopped_early,
        epochs_run: report.epochs.len(),
        checkpoint: &checkpoint,
    };
    write_jsonl(&mut log_file, &log_path, &summary)?;
    log_file.flush().map_err(io_err(&log_path))?;
    Ok(params)
}

fn run_train(config: &RunConfig) -> Result<(), CliError> {
    let out = config.out_dir("train");
    config.write_resolved(&out)?;
    train_into(config, &config.model, &out)?;
    log::info!(
        "checkpoint written to {}",
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn run_sweep(config: &RunConfig) -> Result<(), CliError> {
    let space = SearchSpace::level(config.sweep.level).ok_or_else(|| {
        CliError::Usage(format!(
            "sweep level must be 1 or 2, got {}",
            config.sweep.level
        ))
    })?;
    let out = config.out_dir("sweep");
    config.write_resolved(&out)?;
    let (train_set, validation_set) = training_sets(config)?;
    let train_config = TrainConfig {
        max_epochs: config.sweep.max_epochs,
        ..config.train.clone()
    };
    let results = sweep::random_search(
        &space,
        config.sweep.budget,
        &config.model,
        &train_config,
        &train_set,
        &validation_set,
        config.seed,
    )?;
    let path = out.join(SWEEP_FILE);
    let mut file = std::fs::File::create(&path).map_err(io_err(&path))?;
    for r in &results {
        log::info!(
            "trial {} score {:.5} hidden {} lr {:.2e} wd {:.2e} lambda {:.2e}",
            r.trial,
            r.score,
            r.config.hidden_dim,
            r.config.learning_rate,
            r.config.weight_decay,
            r.config.lambda
        );
        write_jsonl(&mut file, &path, &LogRecord::Trial(r))?;
    }
    Ok(())
}

fn run_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let out = config.out_dir("evaluate");
    config.write_resolved(&out)?;
    let e = &config.eval;
    let dir = config.data_dir();
    let splits = config
        .data
        .test_specs()
        .iter()
        .map(|spec| load_split(&dir, &spec.name))
        .collect::<Result<Vec<_>, _>>()?;
    let models = if !e.heuristics.contains(&HeuristicSource::Learnt) {
        Vec::new()
    } else if let Some(path) = &e.checkpoint {
        vec![ModelParameters::load(path)?]
    } else if e.retrain_per_trial {
        (0..e.trials.max(1))
            .map(|trial| {
                let model = ModelConfig {
                    seed: config.seed.wrapping_add(trial as u64),
                    ..config.model.clone()
                };
                log::info!("training model for trial {trial}");
                train_into(config, &model, &out.join(format!("trial-{trial}")))
            })
            .collect::<Result<_, _>>()?
    } else {
        return Err(CliError::Usage(
            "the learnt heuristic needs --checkpoint or --retrain-per-trial".into(),
        ));
    };
    let eval_config = EvalConfig {
        trials: e.trials,
        timing_reps: e.timing_reps,
        seed: config.seed,
    };
    let report = eval::evaluate(&models, &splits, &e.heuristics, &eval_config)?;
    for path in report::emit_report(&report, ReportFormat::All, &out)? {
        log::info!("wrote {}", path.display());
    }
    print!("{}", report::render_table(&report));
    Ok(())
}

fn run_report(config: &RunConfig, args: &ReportArgs) -> Result<(), CliError> {
    let format = match args.format.as_str() {
        "all" => ReportFormat::All,
        "csv" => ReportFormat::Csv,
        "json" => ReportFormat::Json,
        other => {
            return Err(CliError::Usage(format!(
                "unknown format `{other}` (expected all, csv or json)"
            )))
        }
    };
    let report = report::load_report(&args.input)?;
    let out = config.out_dir("report");
    config.write_resolved(&out)?;
    report::emit_report(&report, format, &out)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = resolve(cli)?;
    if config.threads > 0 {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    match &cli.command {
        Command::GenerateData(_) => generate_data(&config),
        Command::Train(_) => run_train(&config),
        Command::Sweep(_) => run_sweep(&config),
        Command::Evaluate(_) => run_evaluate(&config),
        Command::Report(args) => run_report(&config, args),
    }
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
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
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("nar-astar").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = RunConfig::default();
        assert_eq!(
            RunConfig::from_toml(&config.to_toml().unwrap()).unwrap(),
            config
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("sed = 3"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[model]\nhiden_dim = 3"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("version = 9"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn partial_tables_fill_defaults() {
        let config =
            RunConfig::from_toml("seed = 7\n[model]\nhidden_dim = 16\n[eval]\ntrials = 2\n")
                .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.model.hidden_dim, 16);
        assert_eq!(config.model.mlp_hidden, ModelConfig::default().mlp_hidden);
        assert_eq!(config.eval.trials, 2);
        assert_eq!(config.train, TrainConfig::default());
    }

    #[test]
    fn flags_override_and_parse_lists() {
        let cli = parse(&[
            "--seed",
            "3",
            "generate-data",
            "--families",
            "sparse,very-dense",
            "--sizes",
            "16,32",
        ]);
        let config = resolve(&cli).unwrap();
        assert_eq!(config.seed, 3);
        assert_eq!(config.data.families, [Family::Sparse, Family::VeryDense]);
        assert_eq!(config.data.sizes, [16, 32]);
        assert_eq!(config.data.plan().len(), 2 + 4);

        let cli = parse(&[
            "evaluate",
            "--heuristic",
            "zero,random",
            "--checkpoint",
            "m.ckpt",
        ]);
        let config = resolve(&cli).unwrap();
        assert_eq!(
            config.eval.heuristics,
            [HeuristicSource::Zero, HeuristicSource::Random]
        );
        assert!(!config.eval.retrain_per_trial);
    }

    #[test]
    fn usage_errors_exit_with_2() {
        assert_eq!(run(["nar-astar", "frobnicate"]), 2);
        assert_eq!(
            run(["nar-astar", "generate-data", "--families", "medium"]),
            2
        );
        assert_eq!(
            run([
                "nar-astar",
                "sweep",
                "--level",
                "3",
                "--out",
                "/nonexistent/x/y"
            ]),
            2
        );
        assert_eq!(run(["nar-astar", "train", "--lr", "-1"]), 2);
    }

    #[test]
    fn missing_data_exits_with_3() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("empty");
        let out = dir.path().join("out");
        let code = run([
            "nar-astar",
            "train",
            "--data-dir",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 3);
    }
}
