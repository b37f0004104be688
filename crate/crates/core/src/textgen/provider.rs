use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{build_prompt, compute_stats, prompt_hash, Prompt, TextEmbedding, TextEncoder, TextError};
use crate::data::{ScalerStats, WindowSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptMode {
    /// Statistics recomputed for every window.
    PerWindow,
    /// Description and instruction only, identical for every window.
    Static,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::PerWindow => "per_window",
            PromptMode::Static => "static",
        }
    }
}

/// Extra sentence appended to the statistics of a prompt, keyed by window
/// start row and channel index.
pub type ContextHint = Arc<dyn Fn(usize, usize) -> Option<String> + Send + Sync>;

/// Renders prompts for windows and resolves their embeddings, preferring
/// imported matrices over the encoder.
#[derive(Clone)]
pub struct TextProvider {
    dataset_key: String,
    t_in: usize,
    horizon: usize,
    mode: PromptMode,
    encoder: Arc<dyn TextEncoder>,
    imported: Arc<BTreeMap<u64, TextEmbedding>>,
    scaler: Option<ScalerStats>,
    hint: Option<ContextHint>,
}

impl fmt::Debug for TextProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TextProvider")
            .field("dataset_key", &self.dataset_key)
            .field("mode", &self.mode)
            .field("dim", &self.encoder.dim())
            .field("imported", &self.imported.len())
            .field("hint", &self.hint.is_some())
            .finish()
    }
}

impl TextProvider {
    pub fn new(
        dataset_key: &str,
        t_in: usize,
        horizon: usize,
        mode: PromptMode,
        encoder: Arc<dyn TextEncoder>,
    ) -> Result<Self, TextError> {
        super::dataset_description(dataset_key)?;
        Ok(Self {
            dataset_key: dataset_key.to_string(),
            t_in,
            horizon,
            mode,
            encoder,
            imported: Arc::new(BTreeMap::new()),
            scaler: None,
            hint: None,
        })
    }

    /// Statistics are computed after undoing this scaler, so prompts quote
    /// values in the units of the source file.
    pub fn with_scaler(mut self, scaler: ScalerStats) -> Self {
        self.scaler = Some(scaler);
        self
    }

    pub fn with_imported(mut self, imported: BTreeMap<u64, TextEmbedding>) -> Self {
        self.imported = Arc::new(imported);
        self
    }

    pub fn with_hint(mut self, hint: ContextHint) -> Self {
        self.hint = Some(hint);
        self
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn mode(&self) -> PromptMode {
        self.mode
    }

    pub fn imported_count(&self) -> usize {
        self.imported.len()
    }

    /// One prompt per channel of the window.
    pub fn prompts(&self, window: &WindowSample) -> Result<Vec<Prompt>, TextError> {
        let raw = match &self.scaler {
            Some(s) => s.inverse_transform(&window.x),
            None => window.x.clone(),
        };
        (0..window.num_channels())
            .map(|n| {
                let stats = match self.mode {
                    PromptMode::PerWindow => {
                        let column: Vec<f64> = (0..raw.rows()).map(|t| raw.get(t, n)).collect();
                        Some(compute_stats(&column))
                    }
                    PromptMode::Static => None,
                };
                let mut p = build_prompt(&self.dataset_key, self.t_in, self.horizon, stats.as_ref())?;
                if let Some(extra) = self.hint.as_ref().and_then(|h| h(window.window_start, n)) {
                    p.input_statistics = [p.input_statistics.as_str(), extra.as_str()]
                        .iter()
                        .filter(|s| !s.is_empty())
                        .copied()
                        .collect::<Vec<_>>()
                        .join(" ");
                    p.full_text = format!("{} {}", p.full_text, extra);
                }
                Ok(p)
            })
            .collect()
    }

    pub fn embed(&self, prompt: &Prompt) -> Result<TextEmbedding, TextError> {
        match self.imported.get(&prompt_hash(&prompt.full_text)) {
            Some(e) => Ok(e.clone()),
            None => self.encoder.encode(&prompt.full_text),
        }
    }

    /// Embeddings for every channel of the window.
    pub fn embeddings(&self, window: &WindowSample) -> Result<Vec<TextEmbedding>, TextError> {
        self.prompts(window)?.iter().map(|p| self.embed(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::data::TimeSeriesFrame;
    use crate::numerics::Tensor;
    use crate::textgen::{EmbeddingSource, StubEncoder};

    fn frame() -> TimeSeriesFrame {
        let data: Vec<f64> = (0..20).flat_map(|t| [t as f64, 10.0 - t as f64]).collect();
        TimeSeriesFrame::new(
            (0..20).map(|t| t.to_string()).collect(),
            Tensor::matrix(20, 2, data),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn provider(mode: PromptMode) -> TextProvider {
        TextProvider::new("synthetic", 8, 4, mode, Arc::new(StubEncoder::new(8, 0))).unwrap()
    }

    #[test]
    fn per_window_prompts_quote_raw_statistics() {
        let f = frame();
        let scaler = ScalerStats::fit(&f, 0..20).unwrap();
        let scaled = scaler.transform_frame(&f);
        let w = &make_windows(&scaled, 8, 4, 0..20)[0];
        let prompts = provider(PromptMode::PerWindow).with_scaler(scaler).prompts(w).unwrap();
        assert_eq!(prompts.len(), 2);
        assert!(prompts[0].input_statistics.contains("min value = 0, max value = 7"));
        assert!(prompts[0].input_statistics.ends_with("upward."));
        assert!(prompts[1].input_statistics.ends_with("downward."));
    }

    #[test]
    fn static_prompts_ignore_window() {
        let f = frame();
        let ws = make_windows(&f, 8, 4, 0..20);
        let p = provider(PromptMode::Static);
        assert_eq!(p.prompts(&ws[0]).unwrap(), p.prompts(&ws[3]).unwrap());
    }

    #[test]
    fn hint_is_appended() {
        let f = frame();
        let w = &make_windows(&f, 8, 4, 0..20)[2];
        let p = provider(PromptMode::PerWindow)
            .with_hint(Arc::new(|start, ch| Some(format!("Window {start} channel {ch}."))));
        let prompts = p.prompts(w).unwrap();
        assert!(prompts[1].full_text.ends_with("Window 2 channel 1."));
        assert_eq!(
            prompts[1].full_text,
            format!(
                "{} {} {}",
                prompts[1].dataset_description, prompts[1].task_instruction, prompts[1].input_statistics
            )
        );
    }

    #[test]
    fn imported_embeddings_take_precedence() {
        let f = frame();
        let w = &make_windows(&f, 8, 4, 0..20)[0];
        let base = provider(PromptMode::Static);
        let prompt = &base.prompts(w).unwrap()[0];
        let mut map = BTreeMap::new();
        map.insert(
            prompt_hash(&prompt.full_text),
            TextEmbedding {
                tokens: Tensor::full(&[2, 8], 0.5),
                source: EmbeddingSource::Imported,
            },
        );
        let embs = base.with_imported(map).embeddings(w).unwrap();
        assert!(embs.iter().all(|e| e.source == EmbeddingSource::Imported));
        assert_eq!(embs[0].num_tokens(), 2);
    }
}
