//! Per-variable prompts and the encoders that turn them into token
//! embeddings.

mod container;
mod encoder;
mod provider;

pub use container::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use encoder::{fnv1a64, prompt_hash, EmbeddingSource, StubEncoder, TextEmbedding, TextEncoder};
pub use provider::{ContextHint, PromptMode, TextProvider};

use crate::codec::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("unknown dataset key `{0}`")]
    UnknownDataset(String),
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("embedding file {path}: {source}")]
    Container { path: String, source: CodecError },
    #[error("embedding file {path}, record {record}: {reason}")]
    Record {
        path: String,
        record: usize,
        reason: String,
    },
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const DESCRIPTION_INDEX: &str = include_str!("../../assets/descriptions/index.txt");

fn description_file(file: &str) -> Option<&'static str> {
    Some(match file {
        "ETT.txt" => include_str!("../../assets/descriptions/ETT.txt"),
        "Weather.txt" => include_str!("../../assets/descriptions/Weather.txt"),
        "Electricity.txt" => include_str!("../../assets/descriptions/Electricity.txt"),
        "Traffic.txt" => include_str!("../../assets/descriptions/Traffic.txt"),
        "synthetic.txt" => include_str!("../../assets/descriptions/synthetic.txt"),
        _ => return None,
    })
}

/// Stored description text for a dataset key.
pub fn dataset_description(key: &str) -> Result<&'static str, TextError> {
    DESCRIPTION_INDEX
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .and_then(|(_, file)| description_file(file.trim()))
        .map(str::trim)
        .ok_or_else(|| TextError::UnknownDataset(key.to_string()))
}

pub fn dataset_keys() -> Vec<&'static str> {
    DESCRIPTION_INDEX
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trend {
    Upward,
    Downward,
    Flat,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Upward => "upward",
            Trend::Downward => "downward",
            Trend::Flat => "flat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub trend: Trend,
}

/// Min, max, median and least-squares trend sign of one channel.
pub fn compute_stats(values: &[f64]) -> InputStats {
    assert!(values.len() >= 2, "statistics need at least two values");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let t_mean = (n - 1) as f64 / 2.0;
    let v_mean = crate::numerics::shifted_mean(values.iter().copied());
    let slope_num: f64 = values
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64 - t_mean) * (v - v_mean))
        .sum();
    let trend = if slope_num > 0.0 {
        Trend::Upward
    } else if slope_num < 0.0 {
        Trend::Downward
    } else {
        Trend::Flat
    };
    InputStats {
        min: sorted[0],
        max: sorted[n - 1],
        median,
        trend,
    }
}

/// C-style `%.4g`: four significant digits, trailing zeros removed,
/// scientific notation for exponents below -4 or above 3.
pub fn format_sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.3e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..4).contains(&exp) {
        let decimals = (3 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Prompt pieces and their concatenation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub dataset_description: String,
    pub task_instruction: String,
    /// Empty in static-prompt mode.
    pub input_statistics: String,
    pub full_text: String,
}

pub fn task_instruction(t_in: usize, m: usize) -> String {
    format!("Forecast the next {m} steps using the past {t_in} steps.")
}

pub fn statistics_text(stats: &InputStats) -> String {
    format!(
        "Input statistics: min value = {}, max value = {}, median value = {}, the overall trend is {}.",
        format_sig4(stats.min),
        format_sig4(stats.max),
        format_sig4(stats.median),
        stats.trend.as_str()
    )
}

/// Renders the prompt for one variable. `stats = None` gives the static
/// (statistics-free) prompt.
pub fn build_prompt(dataset_key: &str, t_in: usize, m: usize, stats: Option<&InputStats>) -> Result<Prompt, TextError> {
    let description = dataset_description(dataset_key)?.to_string();
    let instruction = task_instruction(t_in, m);
    let statistics = stats.map(statistics_text).unwrap_or_default();
    let full_text = [description.as_str(), instruction.as_str(), statistics.as_str()]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Prompt {
        dataset_description: description,
        task_instruction: instruction,
        input_statistics: statistics,
        full_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_examples() {
        let s = compute_stats(&[1.0, 2.0, 3.0]);
        assert_eq!((s.min, s.max, s.median, s.trend), (1.0, 3.0, 2.0, Trend::Upward));
        assert_eq!(compute_stats(&[3.0, 2.0, 1.0]).trend, Trend::Downward);
        assert_eq!(compute_stats(&[1.0, 2.0, 3.0, 4.0]).median, 2.5);
        assert_eq!(compute_stats(&[5.0, 5.0, 5.0]).trend, Trend::Flat);
        assert_eq!(compute_stats(&[1.0, 3.0, 1.0]).trend, Trend::Flat);
    }

    #[test]
    fn sig4_matches_c_printf() {
        // reference strings from printf("%.4g")
        let cases = [
            (1.0, "1"),
            (2.5, "2.5"),
            (2.46813, "2.468"),
            (-0.5, "-0.5"),
            (1234.5, "1234"),
            (1235.5, "1236"),
            (12345.0, "1.234e+04"),
            (9999.5, "1e+04"),
            (0.0001234, "0.0001234"),
            (0.00001234, "1.234e-05"),
            (100.0, "100"),
            (1e-300, "1e-300"),
            (0.1 + 0.2, "0.3"),
        ];
        for (v, s) in cases {
            assert_eq!(format_sig4(v), s, "{v}");
        }
    }

    #[test]
    fn prompt_contents() {
        let stats = InputStats {
            min: 1.0,
            max: 3.0,
            median: 2.0,
            trend: Trend::Upward,
        };
        let p = build_prompt("ETTh1", 512, 96, Some(&stats)).unwrap();
        assert!(p.task_instruction.contains("next 96 steps using the past 512 steps"));
        assert!(p.input_statistics.ends_with("the overall trend is upward."));
        assert_eq!(
            p.input_statistics,
            "Input statistics: min value = 1, max value = 3, median value = 2, the overall trend is upward."
        );
        assert_eq!(
            p.full_text,
            format!(
                "{} {} {}",
                p.dataset_description, p.task_instruction, p.input_statistics
            )
        );
        let again = build_prompt("ETTh1", 512, 96, Some(&stats)).unwrap();
        assert_eq!(p.full_text.as_bytes(), again.full_text.as_bytes());
    }

    #[test]
    fn static_prompt_has_no_statistics() {
        let p = build_prompt("Weather", 96, 24, None).unwrap();
        assert!(p.input_statistics.is_empty());
        assert!(p.full_text.ends_with("using the past 96 steps."));
    }

    #[test]
    fn unknown_dataset() {
        assert!(matches!(
            build_prompt("nope", 8, 4, None),
            Err(TextError::UnknownDataset(_))
        ));
    }

    #[test]
    fn every_key_has_a_description() {
        for k in dataset_keys() {
            assert!(!dataset_description(k).unwrap().is_empty());
        }
    }

    proptest! {
        #[test]
        fn rendering_separates_distinct_values(a in 1e-3f64..1e6, rel in 1e-3f64..1.0, sign in prop::bool::ANY) {
            let a = if sign { a } else { -a };
            let b = a * (1.0 + rel);
            let t = |v: f64| statistics_text(&InputStats { min: v, max: v, median: v, trend: Trend::Flat });
            prop_assert_ne!(t(a), t(b));
        }
    }
}
