//! The `ficots` command line: `train`, `eval`, `gradcheck` and `dump`.
//!
//! Results go to stdout as single JSON lines. Failures print one JSON line
//! `{"error": kind, "message": ...}` on stderr and exit with 2 (config),
//! 3 (data or files) or 4 (numeric failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, ExperimentConfig};
use crate::data::{self, DataError, ScalerStats, SplitRanges, TimeSeriesFrame, WindowSample};
use crate::model::{embedding_dump_csv, Model, ModelError};
use crate::numerics::{GradCheckOptions, GradCheckReport, NumericsError, Tensor};
use crate::textgen::{read_embeddings, StubEncoder, TextError, TextProvider};
use crate::training::{self, MetricSpace, TextSource, TrainError};

pub const CHECKPOINT_FILE: &str = "checkpoint.fcck";
pub const HISTORY_FILE: &str = "history.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PROMPTS_FILE: &str = "prompts.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";

/// Windows used by `gradcheck`.
const GRADCHECK_WINDOWS: usize = 2;

#[derive(Debug, Parser)]
#[command(name = "ficots", version, about = "Multimodal time-series forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DumpKind {
    Prompts,
    Embeddings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, history and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "few-shot")]
        few_shot: Option<f64>,
    },
    /// Score a checkpoint on the test split and write predictions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file; defaults to the one the checkpoint was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "raw-space")]
        raw_space: bool,
    },
    /// Compare analytic and finite-difference gradients of the loss.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "corrupt-gradient", hide = true)]
        corrupt_gradient: bool,
    },
    /// Export rendered prompts or pre/post-alignment embeddings.
    Dump {
        #[arg(long)]
        checkpoint: PathBuf,
        what: DumpKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    /// The single-line JSON report.
    pub fn to_json(&self) -> String {
        json!({"error": self.kind.as_str(), "message": self.message}).to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::new(ErrorKind::Data, e.to_string()),
            _ => Self::new(ErrorKind::Config, e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::new(ErrorKind::Data, e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        Self::new(ErrorKind::Numeric, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::Config(_) => ErrorKind::Config,
            ModelError::Input(_) => ErrorKind::Data,
            ModelError::Numerics(_) => ErrorKind::Numeric,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        let kind = match e {
            TextError::UnknownDataset(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Self::new(ErrorKind::Config, m),
            TrainError::Model(e) => e.into(),
            TrainError::Text(e) => e.into(),
            TrainError::NonFinite(_) => Self::new(ErrorKind::Numeric, e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let kind = match e {
            CheckpointError::Config { .. } | CheckpointError::Model { .. } => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::new(ErrorKind::Data, format!("cannot write {}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::new(
            ErrorKind::Config,
            format!("cannot create output directory {}: {e}", dir.display()),
        )
    })
}

/// Normalized series, split boundaries and the scaler fitted on training
/// rows.
pub struct PreparedData {
    pub frame: TimeSeriesFrame,
    pub ranges: SplitRanges,
    pub scaler: ScalerStats,
}

impl PreparedData {
    /// Windows of split `k` (0 train, 1 validation, 2 test).
    pub fn windows(&self, k: usize, t_in: usize, m: usize) -> Vec<WindowSample> {
        let slice = self.ranges.window_slices(t_in)[k].clone();
        data::make_windows(&self.frame, t_in, m, slice)
    }
}

/// Loads and normalizes the dataset. `scaler = None` fits a new one on the
/// training rows. Fills in `num_vars` when the config leaves it at 0.
pub fn prepare_data(
    config: &mut ExperimentConfig,
    path: &Path,
    scaler: Option<ScalerStats>,
) -> Result<PreparedData, CliError> {
    let raw = data::load_csv(path, config.has_date_column)?;
    let n = raw.num_channels();
    if config.model.num_vars == 0 {
        config.model.num_vars = n;
    } else if config.model.num_vars != n {
        return Err(CliError::new(
            ErrorKind::Data,
            format!(
                "{} has {n} variables, the model expects {}",
                path.display(),
                config.model.num_vars
            ),
        ));
    }
    let ranges = data::split(&raw, &config.split)?;
    ranges.check_lengths(config.model.seq_len, config.model.pred_len)?;
    let scaler = match scaler {
        Some(s) => s,
        None => ScalerStats::fit(&raw, ranges.train.clone())?,
    };
    Ok(PreparedData {
        frame: scaler.transform_frame(&raw),
        ranges,
        scaler,
    })
}

/// The prompt renderer and encoder a config asks for.
pub fn text_provider(config: &ExperimentConfig, scaler: &ScalerStats) -> Result<TextProvider, CliError> {
    let m = &config.model;
    let encoder = Arc::new(StubEncoder::new(m.d_model, config.text_seed));
    let mut provider = TextProvider::new(&config.dataset_key, m.seq_len, m.pred_len, config.text_mode, encoder)?
        .with_scaler(scaler.clone());
    if let Some(path) = &config.text_import {
        provider = provider.with_imported(read_embeddings(path, m.d_model)?);
    }
    Ok(provider)
}

fn load_config(path: &Path, seed: Option<u64>, few_shot: Option<f64>) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.set_seed(s);
    }
    if let Some(f) = few_shot {
        config.split.few_shot_fraction = f;
        config.train.few_shot_fraction = f;
    }
    config.validate()?;
    Ok(config)
}

/// Outcome of `train`.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub history: training::History,
}

pub fn cmd_train(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    few_shot: Option<f64>,
) -> Result<TrainSummary, CliError> {
    let mut config = load_config(config_path, seed, few_shot)?;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    let data_path = config.data_path.clone();
    let data = prepare_data(&mut config, &data_path, None)?;
    let (t_in, m) = (config.model.seq_len, config.model.pred_len);
    let train_windows = data::few_shot_subset(&data.windows(0, t_in, m), config.split.few_shot_fraction);
    let val_windows = data.windows(1, t_in, m);
    let provider = text_provider(&config, &data.scaler)?;

    let mut model = Model::new(config.model.clone())?;
    let history = training::train(&mut model, &train_windows, &val_windows, &provider, &config.train)?;

    prepare_dir(&out_dir)?;
    let checkpoint = Checkpoint {
        best_epoch: history.best_epoch as u32,
        seed: config.seed(),
        model,
        scaler: data.scaler,
        config,
    };
    write_file(&out_dir.join(CHECKPOINT_FILE), checkpoint.to_bytes())?;
    write_file(&out_dir.join(HISTORY_FILE), history.to_text())?;
    write_file(&out_dir.join(MANIFEST_FILE), checkpoint.config.to_text())?;
    Ok(TrainSummary { out_dir, history })
}

/// Outcome of `eval`.
#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub metrics: training::Metrics,
    pub space: MetricSpace,
    pub predictions_path: PathBuf,
}

impl EvalSummary {
    pub fn to_json(&self) -> String {
        json!({
            "mse": self.metrics.mse,
            "mae": self.metrics.mae,
            "n_windows": self.metrics.n_windows,
            "space": self.space.as_str(),
        })
        .to_string()
    }
}

/// Checkpoint plus the test split it is evaluated on.
struct Loaded {
    checkpoint: Checkpoint,
    data: PreparedData,
    provider: TextProvider,
}

fn load_checkpoint(path: &Path, data_path: Option<&Path>) -> Result<Loaded, CliError> {
    let checkpoint = Checkpoint::load(path)?;
    let mut config = checkpoint.config.clone();
    let data_path = data_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.data_path.clone());
    let data = prepare_data(&mut config, &data_path, Some(checkpoint.scaler.clone()))?;
    let provider = text_provider(&config, &data.scaler)?;
    Ok(Loaded {
        checkpoint,
        data,
        provider,
    })
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    data_path: Option<&Path>,
    out: Option<&Path>,
    raw_space: bool,
) -> Result<EvalSummary, CliError> {
    let loaded = load_checkpoint(checkpoint_path, data_path)?;
    let config = &loaded.checkpoint.config;
    let m = &config.model;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    let space = if raw_space {
        MetricSpace::Raw
    } else {
        config.metric_space
    };
    let windows = loaded.data.windows(2, m.seq_len, m.pred_len);
    let eval = training::evaluate(
        &loaded.checkpoint.model,
        &windows,
        &loaded.provider,
        config.train.batch_size,
        space,
        Some(&loaded.data.scaler),
    )?;

    let mut csv = String::from("window_start,step,variable,pred,truth\n");
    for ((w, p), t) in windows.iter().zip(&eval.predictions).zip(&eval.truths) {
        for step in 0..p.rows() {
            for var in 0..p.cols() {
                let _ = writeln!(
                    csv,
                    "{},{step},{var},{},{}",
                    w.window_start,
                    p.get(step, var),
                    t.get(step, var)
                );
            }
        }
    }
    prepare_dir(&out_dir)?;
    let predictions_path = out_dir.join(PREDICTIONS_FILE);
    write_file(&predictions_path, csv)?;
    Ok(EvalSummary {
        metrics: eval.metrics,
        space,
        predictions_path,
    })
}

/// Gradient check of the loss on the first training windows of `config`,
/// with freshly initialized parameters.
pub fn gradcheck_config(config: &mut ExperimentConfig, opts: &GradCheckOptions) -> Result<GradCheckReport, CliError> {
    let data_path = config.data_path.clone();
    let data = prepare_data(config, &data_path, None)?;
    let (t_in, m) = (config.model.seq_len, config.model.pred_len);
    let windows: Vec<WindowSample> = data.windows(0, t_in, m).into_iter().take(GRADCHECK_WINDOWS).collect();
    let provider = text_provider(config, &data.scaler)?;
    let texts = windows
        .iter()
        .map(|w| provider.texts(w))
        .collect::<Result<Vec<Vec<Tensor>>, _>>()?;
    let model = Model::new(config.model.clone())?;
    Ok(training::loss_gradcheck(&model, &windows, &texts, opts)?)
}

/// Runs the check and fails with a numeric error unless it passes.
pub fn cmd_gradcheck(config_path: &Path, seed: Option<u64>, corrupt: bool) -> Result<GradCheckReport, CliError> {
    let mut config = load_config(config_path, seed, None)?;
    let opts = GradCheckOptions {
        corrupt_analytic: corrupt,
        ..GradCheckOptions::default()
    };
    gradcheck_config(&mut config, &opts)
}

pub fn gradcheck_lines(report: &GradCheckReport) -> Vec<String> {
    let mut lines: Vec<String> = report
        .per_param
        .iter()
        .map(|p| {
            json!({
                "param": p.name,
                "max_rel_error": p.max_rel_error,
                "index": p.worst_index,
                "analytic": p.analytic,
                "numeric": p.numeric,
            })
            .to_string()
        })
        .collect();
    lines.push(
        json!({
            "max_rel_error": report.max_rel_error,
            "worst_param": report.worst_param,
            "checked": report.checked_elements,
            "passed": report.passed,
        })
        .to_string(),
    );
    lines
}

/// Writes `prompts.txt` (one `window_start<TAB>variable<TAB>prompt` line
/// per test window and variable) or `embeddings.csv` (first test window).
pub fn cmd_dump(checkpoint_path: &Path, what: DumpKind, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let loaded = load_checkpoint(checkpoint_path, None)?;
    let config = &loaded.checkpoint.config;
    let m = &config.model;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    let windows = loaded.data.windows(2, m.seq_len, m.pred_len);
    let (name, contents) = match what {
        DumpKind::Prompts => {
            let mut text = String::new();
            for w in &windows {
                for (var, p) in loaded.provider.prompts(w)?.iter().enumerate() {
                    let _ = writeln!(text, "{}\t{var}\t{}", w.window_start, p.full_text);
                }
            }
            (PROMPTS_FILE, text)
        }
        DumpKind::Embeddings => {
            let first = windows
                .first()
                .ok_or_else(|| CliError::new(ErrorKind::Data, "test split has no windows"))?;
            let texts = loaded.provider.texts(first)?;
            (
                EMBEDDINGS_FILE,
                embedding_dump_csv(&loaded.checkpoint.model, first, &texts)?,
            )
        }
    };
    prepare_dir(&out_dir)?;
    let path = out_dir.join(name);
    write_file(&path, contents)?;
    Ok(path)
}

/// Executes a parsed command, printing results to stdout. Returns the
/// process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            few_shot,
        } => cmd_train(&config, out.as_deref(), seed, few_shot).map(|s| {
            let best = s.history.best();
            println!(
                "{}",
                json!({
                    "out_dir": s.out_dir.display().to_string(),
                    "epochs": s.history.epochs.len(),
                    "best_epoch": s.history.best_epoch,
                    "val_mse": best.val_mse,
                    "val_mae": best.val_mae,
                    "stopped_early": s.history.stopped_early,
                })
            );
        }),
        Command::Eval {
            checkpoint,
            data,
            out,
            raw_space,
        } => cmd_eval(&checkpoint, data.as_deref(), out.as_deref(), raw_space).map(|s| println!("{}", s.to_json())),
        Command::Gradcheck {
            config,
            seed,
            corrupt_gradient,
        } => cmd_gradcheck(&config, seed, corrupt_gradient).and_then(|r| {
            for line in gradcheck_lines(&r) {
                println!("{line}");
            }
            if r.passed {
                Ok(())
            } else {
                Err(CliError::new(
                    ErrorKind::Numeric,
                    format!(
                        "gradient check failed: max relative error {:e} in {}",
                        r.max_rel_error, r.worst_param
                    ),
                ))
            }
        }),
        Command::Dump { checkpoint, what, out } => cmd_dump(&checkpoint, what, out.as_deref())
            .map(|p| println!("{}", json!({"written": p.display().to_string()}))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(ErrorKind::Config.exit_code(), 2);
        assert_eq!(ErrorKind::Data.exit_code(), 3);
        assert_eq!(ErrorKind::Numeric.exit_code(), 4);
        let e: CliError = ModelError::Config("patch_len 40 exceeds seq_len 32".into()).into();
        assert_eq!(e.kind, ErrorKind::Config);
        let line = e.to_json();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "config");
        let e: CliError = TrainError::NonFinite("loss".into()).into();
        assert_eq!(e.kind, ErrorKind::Numeric);
    }

    #[test]
    fn usage_errors_come_from_clap() {
        let bad = Cli::try_parse_from(["ficots", "dump", "--checkpoint", "x", "weights"]);
        assert_eq!(bad.unwrap_err().exit_code(), 2);
        let ok = Cli::try_parse_from(["ficots", "train", "--config", "c.cfg", "--few-shot", "0.1"]).unwrap();
        assert!(matches!(ok.command, Command::Train { few_shot: Some(f), .. } if f == 0.1));
    }
}
