//! Experiment configuration files.
//!
//! The grammar is one `key = value` pair per line. Blank lines and lines
//! starting with `#` are ignored, keys may appear once, and unknown keys are
//! rejected. Relative paths resolve against the directory of the file.
//!
//! ```text
//! dataset.path = ETTh1.csv
//! dataset.key = ETTh1
//! split = months 12,4,4
//! model.seq_len = 512
//! model.pred_len = 96
//! preset = wo_llm
//! seed = 2024
//! ```
//!
//! `preset = NAME` applies a named ablation fragment before every other
//! key, whatever its position in the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::data::{parse_plan, SplitSpec};
use crate::model::{GraphKind, ModelConfig};
use crate::textgen::PromptMode;
use crate::training::{MetricSpace, TrainConfig};

const ABLATION_PRESETS: &str = include_str!("../assets/ablation_presets.txt");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`: expected {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    /// Selects the stored dataset description used in prompts.
    pub dataset_key: String,
    pub has_date_column: bool,
    pub split: SplitSpec,
    /// `num_vars = 0` means "take it from the data".
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub text_mode: PromptMode,
    pub text_import: Option<PathBuf>,
    pub text_seed: u64,
    pub output_dir: PathBuf,
    pub metric_space: MetricSpace,
    pub preset: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: PathBuf::new(),
            dataset_key: String::new(),
            has_date_column: true,
            split: SplitSpec::default(),
            model: ModelConfig {
                num_vars: 0,
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
            text_mode: PromptMode::PerWindow,
            text_import: None,
            text_seed: 0,
            output_dir: PathBuf::from("runs"),
            metric_space: MetricSpace::Normalized,
            preset: None,
        }
    }
}

fn preset_lines(name: &str) -> Option<Vec<&'static str>> {
    let mut lines = ABLATION_PRESETS.lines().map(str::trim);
    let header = format!("[{name}]");
    lines.find(|l| *l == header)?;
    Some(
        lines
            .take_while(|l| !l.starts_with('['))
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect(),
    )
}

pub fn preset_names() -> Vec<&'static str> {
    ABLATION_PRESETS
        .lines()
        .filter_map(|l| l.trim().strip_prefix('[')?.strip_suffix(']'))
        .collect()
}

/// Accepts table-style spellings such as `w/o token-level`.
pub fn normalize_preset_name(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .replace("w/o", "wo")
        .replace(['-', ' '], "_")
        .replace("__", "_")
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(value_err(key, v, "true or false")),
    }
}

fn value_err(key: &str, v: &str, expected: &'static str) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: v.to_string(),
        expected,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, expected: &'static str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| value_err(key, v, expected))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let joined = base.join(p);
    std::path::absolute(&joined).unwrap_or(joined)
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.model.seed = seed;
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: k.to_string(),
                });
            }
            entries.push((i + 1, k, v));
        }

        let mut cfg = Self {
            output_dir: resolve(base_dir, "runs"),
            ..Self::default()
        };
        if let Some(&(line, _, name)) = entries.iter().find(|(_, k, _)| *k == "preset") {
            let norm = normalize_preset_name(name);
            let fragment = preset_lines(&norm).ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("unknown preset `{name}` (known: {})", preset_names().join(", ")),
            })?;
            for l in fragment {
                let (k, v) = l.split_once('=').expect("preset lines are key = value");
                cfg.set(line, k.trim(), v.trim(), base_dir)?;
            }
            cfg.preset = Some(norm);
        }
        for (line, k, v) in entries {
            if k != "preset" {
                cfg.set(line, k, v, base_dir)?;
            }
        }
        if cfg.dataset_key.is_empty() || cfg.data_path.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("dataset.path and dataset.key are required".into()));
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str, base: &Path) -> Result<(), ConfigError> {
        const UINT: &str = "a non-negative integer";
        const REAL: &str = "a number";
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "dataset.path" => self.data_path = resolve(base, v),
            "dataset.key" => self.dataset_key = v.to_string(),
            "dataset.has_date" => self.has_date_column = parse_bool(key, v)?,
            "split" => {
                self.split.plan = match v.strip_prefix("preset ") {
                    Some(name) => SplitSpec::preset(name.trim()),
                    None => parse_plan(v),
                }
                .map_err(|_| value_err(key, v, "`fractions a,b,c`, `months a,b,c` or `preset NAME`"))?
            }
            "few_shot" => {
                let f = parse_num(key, v, REAL)?;
                self.split.few_shot_fraction = f;
                t.few_shot_fraction = f;
            }
            "seed" => self.set_seed(parse_num(key, v, UINT)?),
            "model.num_vars" => m.num_vars = parse_num(key, v, UINT)?,
            "model.seq_len" => m.seq_len = parse_num(key, v, UINT)?,
            "model.pred_len" => m.pred_len = parse_num(key, v, UINT)?,
            "model.patch_len" => m.patch_len = parse_num(key, v, UINT)?,
            "model.stride" => m.stride = parse_num(key, v, UINT)?,
            "model.d_model" => m.d_model = parse_num(key, v, UINT)?,
            "model.heads" => m.num_heads = parse_num(key, v, UINT)?,
            "model.alpha" => m.alpha = parse_num(key, v, REAL)?,
            "model.token_level" => m.token_level = parse_bool(key, v)?,
            "model.feature_level" => m.feature_level = parse_bool(key, v)?,
            "model.decision_level" => m.decision_level = parse_bool(key, v)?,
            "model.branch1" => m.branch1 = parse_bool(key, v)?,
            "model.branch2" => m.branch2 = parse_bool(key, v)?,
            "model.graph" => {
                m.graph_kind = match v {
                    "sage" => GraphKind::Sage,
                    "gcn" => GraphKind::Gcn,
                    _ => return Err(value_err(key, v, "sage or gcn")),
                }
            }
            "model.intra_modality_edges" => m.intra_modality_edges = parse_bool(key, v)?,
            "model.homogeneous" => m.homogeneous = parse_bool(key, v)?,
            "model.use_text" => m.use_text = parse_bool(key, v)?,
            "model.instance_norm" => m.instance_norm = parse_bool(key, v)?,
            "train.lr" => t.learning_rate = parse_num(key, v, REAL)?,
            "train.batch_size" => t.batch_size = parse_num(key, v, UINT)?,
            "train.epochs" => t.max_epochs = parse_num(key, v, UINT)?,
            "train.patience" => t.patience = parse_num(key, v, UINT)?,
            "train.beta1" => t.beta1 = parse_num(key, v, REAL)?,
            "train.beta2" => t.beta2 = parse_num(key, v, REAL)?,
            "train.eps" => t.eps = parse_num(key, v, REAL)?,
            "text.mode" => {
                self.text_mode = match v {
                    "per_window" => PromptMode::PerWindow,
                    "static" => PromptMode::Static,
                    _ => return Err(value_err(key, v, "per_window or static")),
                }
            }
            "text.import" => self.text_import = (!v.is_empty()).then(|| resolve(base, v)),
            "text.seed" => self.text_seed = parse_num(key, v, UINT)?,
            "output.dir" => self.output_dir = resolve(base, v),
            "metrics.space" => {
                self.metric_space = match v {
                    "normalized" => MetricSpace::Normalized,
                    "raw" => MetricSpace::Raw,
                    _ => return Err(value_err(key, v, "normalized or raw")),
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Checks every field except the variable count, which needs the data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let mut probe = self.model.clone();
        if probe.num_vars == 0 {
            probe.num_vars = 1;
        }
        probe.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.split.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        crate::textgen::dataset_description(&self.dataset_key).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.data_path.is_file() {
            return invalid(format!("dataset file {} does not exist", self.data_path.display()));
        }
        if let Some(p) = &self.text_import {
            if !p.is_file() {
                return invalid(format!("embedding file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    /// Fully resolved form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut lines = vec![
            format!("dataset.path = {}", self.data_path.display()),
            format!("dataset.key = {}", self.dataset_key),
            format!("dataset.has_date = {}", self.has_date_column),
            format!("split = {}", self.split.plan),
            format!("few_shot = {}", self.split.few_shot_fraction),
            format!("seed = {}", self.seed()),
            format!("model.num_vars = {}", m.num_vars),
            format!("model.seq_len = {}", m.seq_len),
            format!("model.pred_len = {}", m.pred_len),
            format!("model.patch_len = {}", m.patch_len),
            format!("model.stride = {}", m.stride),
            format!("model.d_model = {}", m.d_model),
            format!("model.heads = {}", m.num_heads),
            format!("model.alpha = {}", m.alpha),
            format!("model.token_level = {}", m.token_level),
            format!("model.feature_level = {}", m.feature_level),
            format!("model.decision_level = {}", m.decision_level),
            format!("model.branch1 = {}", m.branch1),
            format!("model.branch2 = {}", m.branch2),
            format!("model.graph = {}", m.graph_kind.as_str()),
            format!("model.intra_modality_edges = {}", m.intra_modality_edges),
            format!("model.homogeneous = {}", m.homogeneous),
            format!("model.use_text = {}", m.use_text),
            format!("model.instance_norm = {}", m.instance_norm),
            format!("train.lr = {}", t.learning_rate),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.epochs = {}", t.max_epochs),
            format!("train.patience = {}", t.patience),
            format!("train.beta1 = {}", t.beta1),
            format!("train.beta2 = {}", t.beta2),
            format!("train.eps = {}", t.eps),
            format!("text.mode = {}", self.text_mode.as_str()),
            format!(
                "text.import = {}",
                self.text_import
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            ),
            format!("text.seed = {}", self.text_seed),
            format!("output.dir = {}", self.output_dir.display()),
            format!("metrics.space = {}", self.metric_space.as_str()),
        ];
        if let Some(p) = &self.preset {
            lines.insert(0, format!("# applied preset: {p}"));
        }
        lines.join("\n") + "\n"
    }
}
