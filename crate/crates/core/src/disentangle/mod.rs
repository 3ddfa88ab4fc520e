//! Splits caption token features into object, attribute and relation
//! components by cross-attention against learnable key-value vectors, then
//! aggregates them into a single sentence embedding.
//!
//! ```text
//! X̂ = LN(Proj(X + FFN(X)))
//! C = CrossAttn(X̂, V_C)            for C in O, A, R
//! Z = LN(X̂ + O + A + R)
//! E = mean_tokens(Z + FFN(Z))
//! ```
//!
//! `X` comes from a small frozen encoder ([`encode`]) whose query and value
//! projections carry low-rank adapters.

mod attention;
mod init;
mod loss;
mod vocab;

pub use attention::{attention_weights, cross_attention, multi_head_attention, segment_multi_head_attention};
pub use init::{init_text_params, random_orthogonal};
pub use loss::{
    disentangle_loss, mean_abs_correlation, pooled_units, ChainRows, CosineReading, DisentangleLossConfig,
};
pub use vocab::{Vocab, UNK, UNK_ID};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Segment, Tensor, Var};
use crate::params::Bound;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Object,
    Attribute,
    Relation,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Object, Component::Attribute, Component::Relation];

    /// The first `count` components in object, attribute, relation order.
    pub fn active(count: usize) -> &'static [Component] {
        &Self::ALL[..count.min(3)]
    }

    pub fn key(self) -> &'static str {
        match self {
            Component::Object => "o",
            Component::Attribute => "a",
            Component::Relation => "r",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::Object => "O",
            Component::Attribute => "A",
            Component::Relation => "R",
        }
    }
}

/// Where the component split happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// No split; the embedding is the pooled projection.
    None,
    /// Every token attends, then tokens are pooled.
    #[default]
    TokenLevel,
    /// Tokens are pooled first and the pooled vector attends.
    AfterPooling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    /// Per-component self-attention over the caption tokens.
    SelfAttention,
    /// Learnable vectors query the caption tokens.
    LearnableQuery,
    /// Caption tokens query the learnable vectors, which serve as keys and values.
    #[default]
    LearnableKeyValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Identity projections and rotated copies of one base vector set.
    #[default]
    Identity,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    /// Encoder width.
    pub d_model: usize,
    /// Embedding width `D`.
    pub dim: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// Rows per learnable vector set.
    pub component_tokens: usize,
    pub max_tokens: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d_model: 32,
            dim: 32,
            heads: 2,
            ffn_hidden: 64,
            component_tokens: 8,
            max_tokens: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub dims: ModelDims,
    /// Number of active components, 1 to 3.
    pub components: usize,
    pub placement: Placement,
    pub attention: AttentionVariant,
    pub init: InitScheme,
    /// Single self-attention layer inside the encoder.
    pub encoder_attention: bool,
    /// Adapter rank; 0 disables the adapters.
    pub lora_rank: usize,
    pub lora_scale: f64,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            dims: ModelDims::default(),
            components: 3,
            placement: Placement::TokenLevel,
            attention: AttentionVariant::LearnableKeyValue,
            init: InitScheme::Identity,
            encoder_attention: true,
            lora_rank: 16,
            lora_scale: 16.0,
        }
    }
}

impl TextConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        for (name, v) in [
            ("d_model", d.d_model),
            ("dim", d.dim),
            ("heads", d.heads),
            ("ffn_hidden", d.ffn_hidden),
            ("component_tokens", d.component_tokens),
            ("max_tokens", d.max_tokens),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if d.dim % d.heads != 0 {
            return Err(Error::config("heads", alloc::format!("must divide dim {}", d.dim)));
        }
        if !(1..=3).contains(&self.components) {
            return Err(Error::config("components", "must be 1, 2 or 3"));
        }
        if !self.lora_scale.is_finite() {
            return Err(Error::config("lora_scale", "must be finite"));
        }
        Ok(())
    }

    pub fn active_components(&self) -> &'static [Component] {
        if self.placement == Placement::None {
            &[]
        } else {
            Component::active(self.components)
        }
    }
}

/// Token ids of several captions laid end to end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceBatch {
    pub ids: Vec<usize>,
    pub segments: Vec<Segment>,
}

impl SentenceBatch {
    pub fn new<S: AsRef<str>>(vocab: &Vocab, captions: &[S], max_tokens: usize) -> Result<Self> {
        let mut ids = Vec::new();
        let mut segments = Vec::with_capacity(captions.len());
        for c in captions {
            let toks = vocab.tokenize(c.as_ref())?;
            if toks.len() > max_tokens {
                return Err(Error::Parse {
                    caption: c.as_ref().into(),
                    reason: alloc::format!("{} tokens exceeds max_tokens {}", toks.len(), max_tokens),
                });
            }
            segments.push(Segment {
                start: ids.len(),
                len: toks.len(),
            });
            ids.extend(toks);
        }
        if segments.is_empty() {
            return Err(Error::Empty("sentence batch"));
        }
        Ok(Self { ids, segments })
    }

    pub fn sentences(&self) -> usize {
        self.segments.len()
    }

    pub fn tokens(&self) -> usize {
        self.ids.len()
    }

    /// Position of each token within its caption.
    pub fn positions(&self) -> Vec<usize> {
        self.segments.iter().flat_map(|s| 0..s.len).collect()
    }

    /// Caption index of each token.
    pub fn owners(&self) -> Vec<usize> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(i, s)| core::iter::repeat(i).take(s.len))
            .collect()
    }
}

/// Sinusoidal position table, `len × d`.
pub fn positional_encoding(positions: &[usize], d: usize) -> Tensor {
    let mut data = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        for i in 0..d {
            let freq = libm::pow(10000.0, -((i / 2 * 2) as f64) / d as f64);
            let a = p as f64 * freq;
            data.push(if i % 2 == 0 { libm::sin(a) } else { libm::cos(a) });
        }
    }
    Tensor::new(alloc::vec![positions.len(), d], data).expect("positional table shape")
}

/// `x W + scale · (x · down) · up`.
pub fn lora_linear(g: &mut Graph, x: Var, w: Var, down: Var, up: Var, scale: f64) -> Result<Var> {
    let base = g.matmul(x, w)?;
    let h = g.matmul(x, down)?;
    let h = g.matmul(h, up)?;
    let h = g.scale(h, scale)?;
    g.add(base, h)
}

fn linear_or_lora(g: &mut Graph, p: &Bound, cfg: &TextConfig, x: Var, which: &str) -> Result<Var> {
    let w = p.get(&alloc::format!("encoder.w{which}"))?;
    if cfg.lora_rank == 0 {
        return g.matmul(x, w);
    }
    let down = p.get(&alloc::format!("encoder.lora_{which}.down"))?;
    let up = p.get(&alloc::format!("encoder.lora_{which}.up"))?;
    lora_linear(g, x, w, down, up, cfg.lora_scale)
}

/// Token features `tokens × d_model`: frozen embeddings plus positions,
/// then (optionally) one residual self-attention layer within each caption.
pub fn encode(g: &mut Graph, p: &Bound, cfg: &TextConfig, batch: &SentenceBatch) -> Result<Var> {
    let table = p.get("embed.tokens")?;
    let x0 = g.gather_rows(table, &batch.ids)?;
    let pe = positional_encoding(&batch.positions(), cfg.dims.d_model);
    let x0 = g.add_const(x0, &pe)?;
    if !cfg.encoder_attention {
        return Ok(x0);
    }
    let q = linear_or_lora(g, p, cfg, x0, "q")?;
    let k = frozen_linear(g, p, x0, "k")?;
    let v = linear_or_lora(g, p, cfg, x0, "v")?;
    let scale = 1.0 / libm::sqrt(cfg.dims.d_model as f64);
    let a = g.segment_attention(q, k, v, &batch.segments, scale)?;
    g.add(x0, a)
}

fn frozen_linear(g: &mut Graph, p: &Bound, x: Var, which: &str) -> Result<Var> {
    let w = p.get(&alloc::format!("encoder.w{which}"))?;
    g.matmul(x, w)
}

fn ffn(g: &mut Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w1 = p.get(&alloc::format!("{prefix}.w1"))?;
    let b1 = p.get(&alloc::format!("{prefix}.b1"))?;
    let w2 = p.get(&alloc::format!("{prefix}.w2"))?;
    let b2 = p.get(&alloc::format!("{prefix}.b2"))?;
    let h = g.affine(x, w1, b1)?;
    let h = g.gelu(h)?;
    g.affine(h, w2, b2)
}

fn layer_norm(g: &mut Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let gain = p.get(&alloc::format!("{prefix}.gain"))?;
    let bias = p.get(&alloc::format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias)
}

/// Graph outputs of [`forward`].
#[derive(Debug, Clone)]
pub struct TextOutput {
    /// Sentence embeddings `E`, one row per caption.
    pub embeddings: Var,
    /// Mean-pooled (not normalised) components, one row per caption.
    pub components: Vec<(Component, Var)>,
    /// Token-level components before pooling (pooled rows for after-pooling).
    pub component_tokens: Vec<(Component, Var)>,
}

impl TextOutput {
    pub fn component(&self, c: Component) -> Option<Var> {
        self.components.iter().find(|(k, _)| *k == c).map(|(_, v)| *v)
    }
}

fn component_rows(
    g: &mut Graph,
    p: &Bound,
    cfg: &TextConfig,
    base: Var,
    segments: &[Segment],
    c: Component,
) -> Result<Var> {
    let key = c.key();
    let wq = p.get(&alloc::format!("dis.attn.{key}.wq"))?;
    let wk = p.get(&alloc::format!("dis.attn.{key}.wk"))?;
    let wv = p.get(&alloc::format!("dis.attn.{key}.wv"))?;
    let heads = cfg.dims.heads;
    match cfg.attention {
        AttentionVariant::LearnableKeyValue => {
            let vectors = p.get(&alloc::format!("dis.vectors.{key}"))?;
            cross_attention(g, base, vectors, wq, wk, wv, heads)
        }
        AttentionVariant::SelfAttention => {
            let q = g.matmul(base, wq)?;
            let k = g.matmul(base, wk)?;
            let v = g.matmul(base, wv)?;
            segment_multi_head_attention(g, q, k, v, heads, segments)
        }
        AttentionVariant::LearnableQuery => {
            // Each caption's tokens are summarised by the learnable queries;
            // the mean summary is broadcast back to that caption's tokens.
            let vectors = p.get(&alloc::format!("dis.vectors.{key}"))?;
            let q = g.matmul(vectors, wq)?;
            let k = g.matmul(base, wk)?;
            let v = g.matmul(base, wv)?;
            let mut rows = Vec::with_capacity(segments.len());
            for s in segments {
                let ks = g.slice_rows(k, s.start, s.len)?;
                let vs = g.slice_rows(v, s.start, s.len)?;
                let o = multi_head_attention(g, q, ks, vs, heads)?;
                rows.push(g.mean_axis(o, 0)?);
            }
            let summary = g.stack_rows(&rows)?;
            let owners: Vec<usize> = segments
                .iter()
                .enumerate()
                .flat_map(|(i, s)| core::iter::repeat(i).take(s.len))
                .collect();
            g.gather_rows(summary, &owners)
        }
    }
}

/// Sentence embeddings and pooled components for every caption in `batch`.
pub fn forward(g: &mut Graph, p: &Bound, cfg: &TextConfig, batch: &SentenceBatch) -> Result<TextOutput> {
    let x = encode(g, p, cfg, batch)?;
    let h = ffn(g, p, "dis.ffn1", x)?;
    let x1 = g.add(x, h)?;
    let pw = p.get("dis.proj.w")?;
    let pb = p.get("dis.proj.b")?;
    let proj = g.affine(x1, pw, pb)?;
    let xhat = layer_norm(g, p, "dis.ln1", proj)?;

    if cfg.placement == Placement::None {
        let e = g.segment_mean(xhat, &batch.segments)?;
        return Ok(TextOutput {
            embeddings: e,
            components: Vec::new(),
            component_tokens: Vec::new(),
        });
    }

    let (base, segments): (Var, Vec<Segment>) = match cfg.placement {
        Placement::AfterPooling => {
            let pooled = g.segment_mean(xhat, &batch.segments)?;
            let segs = (0..batch.sentences()).map(|i| Segment { start: i, len: 1 }).collect();
            (pooled, segs)
        }
        _ => (xhat, batch.segments.clone()),
    };

    let mut sum = base;
    let mut component_tokens = Vec::new();
    for &c in cfg.active_components() {
        let rows = component_rows(g, p, cfg, base, &segments, c)?;
        sum = g.add(sum, rows)?;
        component_tokens.push((c, rows));
    }
    let z = layer_norm(g, p, "dis.ln2", sum)?;
    let f = ffn(g, p, "dis.ffn2", z)?;
    let out = g.add(z, f)?;

    let pool = |g: &mut Graph, v: Var| -> Result<Var> {
        if cfg.placement == Placement::AfterPooling {
            Ok(v)
        } else {
            g.segment_mean(v, &batch.segments)
        }
    };
    let embeddings = pool(g, out)?;
    let mut components = Vec::with_capacity(component_tokens.len());
    for &(c, v) in &component_tokens {
        components.push((c, pool(g, v)?));
    }
    Ok(TextOutput {
        embeddings,
        components,
        component_tokens,
    })
}
