//! The forecaster: patch embedding, token-level graph alignment between
//! patches and prompt tokens, feature-level cross-attention across
//! variables, and decision-level gated fusion.

mod attention;
mod dump;
mod fusion;
mod graph;
mod patch;

pub use attention::{cross_attention, AttentionOutput, AttentionWeights};
pub use dump::{embedding_dump_csv, EMBEDDING_DUMP_STAGES};
pub use fusion::{decision_fuse, Affine, FusionOutput, FusionWeights};
pub use graph::{
    align_graph, build_hetero_graph, dynamic_filter, intra_modality_mask, message_pass, sage_update, GraphKind,
    GraphWeights, HeteroGraph, Mask, NodeRef,
};
pub use patch::{patch_count, patch_starts, patchify};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::WindowSample;
use crate::numerics::{NumericsError, ParamSet, Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input does not match the model: {0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub pred_len: usize,
    pub num_vars: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub num_heads: usize,
    /// Filtering sensitivity of the similarity threshold.
    pub alpha: f64,
    pub token_level: bool,
    pub feature_level: bool,
    pub decision_level: bool,
    pub branch1: bool,
    pub branch2: bool,
    pub graph_kind: GraphKind,
    pub intra_modality_edges: bool,
    /// One update matrix shared by both node types.
    pub homogeneous: bool,
    /// When false every text embedding is replaced by zeros.
    pub use_text: bool,
    pub instance_norm: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 512,
            pred_len: 96,
            num_vars: 1,
            patch_len: 16,
            stride: 8,
            d_model: 64,
            num_heads: 8,
            alpha: 0.5,
            token_level: true,
            feature_level: true,
            decision_level: true,
            branch1: true,
            branch2: true,
            graph_kind: GraphKind::Sage,
            intra_modality_edges: false,
            homogeneous: false,
            use_text: true,
            instance_norm: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.seq_len < 2 {
            return fail(format!("seq_len = {} must be at least 2", self.seq_len));
        }
        if self.pred_len < 1 {
            return fail("pred_len must be at least 1".into());
        }
        if self.num_vars < 1 {
            return fail("num_vars must be at least 1".into());
        }
        if self.patch_len < 1 || self.patch_len > self.seq_len {
            return fail(format!(
                "patch_len = {} must satisfy 1 <= patch_len <= seq_len = {}",
                self.patch_len, self.seq_len
            ));
        }
        if self.stride < 1 {
            return fail("stride must be at least 1".into());
        }
        if self.d_model < 1 || self.num_heads < 1 || !self.d_model.is_multiple_of(self.num_heads) {
            return fail(format!(
                "d_model = {} must be a positive multiple of num_heads = {}",
                self.d_model, self.num_heads
            ));
        }
        if !self.alpha.is_finite() {
            return fail(format!("alpha = {} must be finite", self.alpha));
        }
        if self.decision_level && !self.branch1 && !self.branch2 {
            return fail("decision-level fusion needs at least one branch".into());
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        patch_count(self.seq_len, self.patch_len, self.stride)
    }

    /// Names and shapes of the parameters this variant uses, in
    /// registration order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, m) = (self.d_model, self.pred_len);
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut add = |name: &str, shape: &[usize]| out.push((name.to_string(), shape.to_vec()));
        add("patch.weight", &[d, self.patch_len]);
        add("patch.bias", &[d]);
        if self.token_level {
            let (prefix, width) = match self.graph_kind {
                GraphKind::Sage => ("sage", 2 * d),
                GraphKind::Gcn => ("gcn", d),
            };
            add(&format!("{prefix}.time.weight"), &[d, width]);
            if !self.homogeneous {
                add(&format!("{prefix}.text.weight"), &[d, width]);
            }
        }
        if self.feature_level {
            for p in ["query", "key", "value", "out"] {
                add(&format!("attn.{p}"), &[d, d]);
            }
        }
        add("text_norm.gamma", &[d]);
        add("text_norm.beta", &[d]);
        add("head.time.weight", &[m, d]);
        add("head.time.bias", &[m]);
        add("head.text.weight", &[m, d]);
        add("head.text.bias", &[m]);
        if self.decision_level {
            add("head.original.weight", &[m, self.num_patches() * self.patch_len]);
            add("head.original.bias", &[m]);
            add("gate.weight", &[m, 2 * m]);
            add("gate.bias", &[m]);
            if self.branch1 {
                add("fusion1.weight", &[m, m]);
                add("fusion1.bias", &[m]);
            }
            if self.branch2 {
                add("fusion2.weight", &[m, m]);
                add("fusion2.bias", &[m]);
            }
            if self.branch1 && self.branch2 {
                add("decision.weight", &[m, 2 * m]);
                add("decision.bias", &[m]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions<'a> {
    /// Reuse these graphs instead of rebuilding them from the current
    /// embeddings (keeps the edge set fixed under parameter perturbation).
    pub graphs: Option<&'a [HeteroGraph]>,
    pub trace: bool,
}

/// Intermediate values of one forward pass. Rows are `(sample, variable)`
/// pairs, sample-major, unless noted.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Patch embeddings before alignment, `(sample, variable, patch)` rows.
    pub pre_align: Tensor,
    /// Patch embeddings after the graph update, same layout.
    pub post_align: Tensor,
    pub pooled_time: Tensor,
    pub pooled_text: Tensor,
    /// `num_vars x num_vars` weights per (sample, head).
    pub attention: Vec<Tensor>,
    pub time_head: Tensor,
    pub text_head: Tensor,
    pub original_head: Option<Tensor>,
    pub gate: Option<Tensor>,
    pub mixed: Option<Tensor>,
    pub branch1: Option<Tensor>,
    pub branch2: Option<Tensor>,
    pub decision_gate: Option<Tensor>,
    pub output: Tensor,
}

pub struct ForwardOutput {
    /// `(batch * num_vars) x pred_len`, sample-major.
    pub prediction: Var,
    /// One graph per (sample, variable); empty without token-level
    /// alignment.
    pub graphs: Vec<HeteroGraph>,
    pub trace: Option<ForwardTrace>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
}

impl Model {
    /// Builds a model with seeded uniform `±sqrt(1 / fan_in)` weights, zero
    /// biases and unit layer-norm gains.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for (name, shape) in config.parameter_shapes() {
            let t = if name.ends_with(".bias") || name.ends_with(".beta") {
                Tensor::zeros(&shape)
            } else if name.ends_with(".gamma") {
                Tensor::full(&shape, 1.0)
            } else {
                let bound = (1.0 / shape[1] as f64).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Tensor::matrix(shape[0], shape[1], data)
            };
            params.add(&name, t)?;
        }
        Ok(Self { config, params })
    }

    /// Wraps existing parameters, checking names and shapes.
    pub fn from_parameters(config: ModelConfig, params: ParamSet) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(params.iter()) {
            if *name != p.name || shape.as_slice() != p.tensor.shape() {
                return Err(ModelError::Config(format!(
                    "parameter `{}` {:?} does not match expected `{name}` {shape:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_inputs(&self, batch: &[WindowSample], texts: &[Vec<Tensor>]) -> Result<(), ModelError> {
        let c = &self.config;
        let bad = |m: String| Err(ModelError::Input(m));
        if batch.is_empty() {
            return bad("empty batch".into());
        }
        if texts.len() != batch.len() {
            return bad(format!("{} text sets for {} windows", texts.len(), batch.len()));
        }
        for (w, t) in batch.iter().zip(texts) {
            if w.seq_len() != c.seq_len || w.num_channels() != c.num_vars {
                return bad(format!(
                    "window {} has shape {:?}, expected [{}, {}]",
                    w.window_start,
                    w.x.shape(),
                    c.seq_len,
                    c.num_vars
                ));
            }
            if t.len() != c.num_vars {
                return bad(format!(
                    "window {} has {} prompts for {} variables",
                    w.window_start,
                    t.len(),
                    c.num_vars
                ));
            }
            for e in t {
                if e.rows() == 0 || e.cols() != c.d_model || e.shape().len() != 2 {
                    return bad(format!(
                        "text embedding of shape {:?} does not have width {}",
                        e.shape(),
                        c.d_model
                    ));
                }
            }
        }
        Ok(())
    }

    /// Runs the forward pass on `vars`, the parameters bound on `tape` in
    /// set order (see [`ParamSet::bind`]). `texts[b][n]` is the token matrix
    /// of variable `n` in window `b`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &[WindowSample],
        texts: &[Vec<Tensor>],
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardOutput, ModelError> {
        self.check_inputs(batch, texts)?;
        if vars.len() != self.params.len() {
            return Err(ModelError::Input(format!(
                "{} bound variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let param = |name: &str| -> Var {
            vars[self
                .params
                .id(name)
                .unwrap_or_else(|| panic!("parameter `{name}` registered"))
                .0]
        };
        let c = &self.config;
        let (n, p, lp, d) = (c.num_vars, c.num_patches(), c.patch_len, c.d_model);
        let rows = batch.len() * n;

        let mut raw = Vec::with_capacity(rows * p * lp);
        let mut loc = Vec::with_capacity(rows * c.pred_len);
        let mut scale = Vec::with_capacity(rows * c.pred_len);
        for w in batch {
            for ch in 0..n {
                let mut series = w.channel(ch);
                if c.instance_norm {
                    let (mu, sd) = (w.instance_mean[ch], w.instance_std[ch]);
                    series.iter_mut().for_each(|v| *v = (*v - mu) / sd);
                    loc.extend(std::iter::repeat_n(mu, c.pred_len));
                    scale.extend(std::iter::repeat_n(sd, c.pred_len));
                }
                raw.extend_from_slice(patchify(&series, lp, c.stride).data());
            }
        }
        let patches = tape.constant(Tensor::matrix(rows * p, lp, raw.clone()));
        let embedded = tape.linear(patches, param("patch.weight"), Some(param("patch.bias")))?;

        let mut text_data = Vec::new();
        let mut text_sizes = Vec::with_capacity(rows);
        let mut last_token = Vec::with_capacity(rows);
        for t in texts.iter().flatten() {
            text_data.extend_from_slice(t.data());
            text_sizes.push(t.rows());
            last_token.push(text_data.len() / d - 1);
        }
        if !c.use_text {
            text_data.fill(0.0);
        }
        let text = tape.constant(Tensor::matrix(text_data.len() / d, d, text_data));

        let (aligned_time, aligned_text, graphs) = if c.token_level {
            let graphs = match opts.graphs {
                Some(g) => {
                    if g.len() != rows
                        || g.iter()
                            .zip(&text_sizes)
                            .any(|(g, &s)| g.num_time != p || g.num_text != s)
                    {
                        return Err(ModelError::Input("supplied graphs do not match the batch".into()));
                    }
                    g.to_vec()
                }
                None => {
                    let emb = tape.value(embedded);
                    let txt = tape.value(text);
                    let mut out = Vec::with_capacity(rows);
                    let mut offset = 0;
                    for (r, &s) in text_sizes.iter().enumerate() {
                        let t = Tensor::matrix(p, d, emb.data()[r * p * d..(r + 1) * p * d].to_vec());
                        let x = Tensor::matrix(s, d, txt.data()[offset * d..(offset + s) * d].to_vec());
                        out.push(align_graph(&t, &x, c.alpha, c.intra_modality_edges)?);
                        offset += s;
                    }
                    out
                }
            };
            let prefix = match c.graph_kind {
                GraphKind::Sage => "sage",
                GraphKind::Gcn => "gcn",
            };
            let time_w = param(&format!("{prefix}.time.weight"));
            let text_w = if c.homogeneous {
                time_w
            } else {
                param(&format!("{prefix}.text.weight"))
            };
            let weights = GraphWeights {
                time: time_w,
                text: text_w,
            };
            let (t, x) = message_pass(tape, embedded, text, &graphs, weights, c.graph_kind)?;
            (t, x, graphs)
        } else {
            (embedded, text, Vec::new())
        };

        let pool_groups = (0..rows)
            .map(|r| (0..p).map(|i| (r * p + i, 1.0 / p as f64)).collect())
            .collect();
        let pooled_time = tape.aggregate(aligned_time, pool_groups)?;
        let pooled_text = tape.select_rows(aligned_text, &last_token)?;

        let (time_feature, attention) = if c.feature_level {
            let w = AttentionWeights {
                query: param("attn.query"),
                key: param("attn.key"),
                value: param("attn.value"),
                out: param("attn.out"),
            };
            let a = cross_attention(tape, pooled_time, pooled_text, w, c.num_heads, n)?;
            (a.output, a.weights)
        } else {
            (pooled_time, Vec::new())
        };
        let text_feature = tape.layer_norm(
            pooled_text,
            param("text_norm.gamma"),
            param("text_norm.beta"),
            LAYER_NORM_EPS,
        )?;
        let time_head = tape.linear(time_feature, param("head.time.weight"), Some(param("head.time.bias")))?;
        let text_head = tape.linear(text_feature, param("head.text.weight"), Some(param("head.text.bias")))?;

        let (mut output, original_head, fusion) = if c.decision_level {
            let flat = tape.constant(Tensor::matrix(rows, p * lp, raw));
            let original = tape.linear(flat, param("head.original.weight"), Some(param("head.original.bias")))?;
            let weights = FusionWeights {
                gate: (param("gate.weight"), param("gate.bias")),
                branch1: c.branch1.then(|| (param("fusion1.weight"), param("fusion1.bias"))),
                branch2: c.branch2.then(|| (param("fusion2.weight"), param("fusion2.bias"))),
                decision: (c.branch1 && c.branch2).then(|| (param("decision.weight"), param("decision.bias"))),
            };
            let f = decision_fuse(tape, time_head, text_head, original, &weights)?;
            (f.output, Some(original), Some(f))
        } else {
            let s = tape.add(time_head, text_head)?;
            (tape.scale(s, 0.5), None, None)
        };
        if c.instance_norm {
            let sc = tape.constant(Tensor::matrix(rows, c.pred_len, scale));
            let lc = tape.constant(Tensor::matrix(rows, c.pred_len, loc));
            let scaled = tape.mul(output, sc)?;
            output = tape.add(scaled, lc)?;
        }

        let trace = opts.trace.then(|| {
            let v = |x: Var| tape.value(x).clone();
            let ov = |x: Option<Var>| x.map(v);
            ForwardTrace {
                pre_align: v(embedded),
                post_align: v(aligned_time),
                pooled_time: v(pooled_time),
                pooled_text: v(pooled_text),
                attention: attention.iter().map(|a| v(*a)).collect(),
                time_head: v(time_head),
                text_head: v(text_head),
                original_head: ov(original_head),
                gate: ov(fusion.map(|f| f.gate)),
                mixed: ov(fusion.map(|f| f.mixed)),
                branch1: ov(fusion.and_then(|f| f.branch1)),
                branch2: ov(fusion.and_then(|f| f.branch2)),
                decision_gate: ov(fusion.and_then(|f| f.decision_gate)),
                output: v(output),
            }
        });
        Ok(ForwardOutput {
            prediction: output,
            graphs,
            trace,
        })
    }

    /// Inference: one `pred_len x num_vars` forecast per window.
    pub fn predict(&self, batch: &[WindowSample], texts: &[Vec<Tensor>]) -> Result<Vec<Tensor>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind_constants(&mut tape);
        let out = self.forward(&mut tape, &vars, batch, texts, ForwardOptions::default())?;
        Ok(unstack_predictions(tape.value(out.prediction), self.config.num_vars))
    }

    /// Records the parameters as constants (no gradient bookkeeping).
    pub fn bind_constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.tensor.clone())).collect()
    }
}

/// Targets in forward-output layout: `(batch * num_vars) x pred_len`.
pub fn stack_targets(batch: &[WindowSample]) -> Tensor {
    let m = batch.first().map_or(0, WindowSample::pred_len);
    let mut data = Vec::with_capacity(batch.len() * m);
    let mut rows = 0;
    for w in batch {
        let yt = w.y.transpose();
        data.extend_from_slice(yt.data());
        rows += yt.rows();
    }
    Tensor::matrix(rows, m, data)
}

/// Inverse of [`stack_targets`]: splits forward output into per-window
/// `pred_len x num_vars` matrices.
pub fn unstack_predictions(stacked: &Tensor, num_vars: usize) -> Vec<Tensor> {
    let m = stacked.cols();
    (0..stacked.rows() / num_vars)
        .map(|b| {
            let block = Tensor::matrix(
                num_vars,
                m,
                stacked.data()[b * num_vars * m..(b + 1) * num_vars * m].to_vec(),
            );
            block.transpose()
        })
        .collect()
}
