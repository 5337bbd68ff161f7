//! Decoder-only transformer: rotary positions, multi-query attention,
//! RMSNorm, gated MLP, tied embeddings.
//!
//! All parameters live in one flat buffer described by a [`ParamLayout`];
//! gradients and optimizer moments reuse the same layout.

mod backward;
mod checkpoint;
mod config;
mod forward;
mod incremental;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Real;
use crate::tokenizer::TokenId;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use forward::{AttentionRecord, ForwardOptions, ForwardOutput};
pub use incremental::DecodeState;

/// Standard deviation of the normal initializer for every weight matrix.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Receives decoupled weight decay (false for norms and embeddings).
    pub decay: bool,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn is_norm(&self) -> bool {
        self.name.ends_with("norm")
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub mlp_norm: usize,
    pub w_gate: usize,
    pub w_up: usize,
    pub w_down: usize,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    pub(crate) embed: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) final_norm: usize,
    total: usize,
}

impl ParamLayout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, decay: bool| {
            let at = offset;
            offset += shape.iter().product::<usize>();
            entries.push(ParamEntry { name, shape, offset: at, decay });
            at
        };
        let (d, q, kv, inter) = (c.hidden_dim, c.q_dim(), c.kv_dim(), c.intermediate_size);
        let embed = push("embed".into(), vec![c.vocab_size, d], false);
        let layers = (0..c.num_layers)
            .map(|l| LayerOffsets {
                attn_norm: push(format!("layers.{l}.attn_norm"), vec![d], false),
                wq: push(format!("layers.{l}.wq"), vec![d, q], true),
                wk: push(format!("layers.{l}.wk"), vec![d, kv], true),
                wv: push(format!("layers.{l}.wv"), vec![d, kv], true),
                wo: push(format!("layers.{l}.wo"), vec![q, d], true),
                mlp_norm: push(format!("layers.{l}.mlp_norm"), vec![d], false),
                w_gate: push(format!("layers.{l}.w_gate"), vec![d, inter], true),
                w_up: push(format!("layers.{l}.w_up"), vec![d, inter], true),
                w_down: push(format!("layers.{l}.w_down"), vec![inter, d], true),
            })
            .collect();
        let final_norm = push("final_norm".into(), vec![d], false);
        Self {
            entries,
            embed,
            layers,
            final_norm,
            total: offset,
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Set of `(layer, head)` pairs whose outputs are zeroed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeadMask {
    heads: BTreeSet<(usize, usize)>,
}

impl HeadMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: usize, head: usize) {
        self.heads.insert((layer, head));
    }

    pub fn contains(&self, layer: usize, head: usize) -> bool {
        self.heads.contains(&(layer, head))
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.heads.iter().copied()
    }

    pub fn is_subset(&self, other: &HeadMask) -> bool {
        self.heads.is_subset(&other.heads)
    }

    /// Every head in the listed layers.
    pub fn whole_layers(layers: impl IntoIterator<Item = usize>, num_heads: usize) -> Self {
        let mut m = Self::empty();
        for l in layers {
            for h in 0..num_heads {
                m.insert(l, h);
            }
        }
        m
    }

    pub fn validate(&self, c: &ModelConfig) -> Result<()> {
        match self
            .heads
            .iter()
            .find(|&&(l, h)| l >= c.num_layers || h >= c.num_heads)
        {
            Some(&(l, h)) => Err(Error::input(format!(
                "head mask entry ({l},{h}) outside {} layers x {} heads",
                c.num_layers, c.num_heads
            ))),
            None => Ok(()),
        }
    }

    /// Mask files: one `layer,head` pair per line; `#` starts a comment.
    pub fn to_text(&self) -> String {
        self.heads.iter().map(|(l, h)| format!("{l},{h}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut m = Self::empty();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parsed = line.split_once(',').and_then(|(l, h)| {
                Some((l.trim().parse::<usize>().ok()?, h.trim().parse::<usize>().ok()?))
            });
            let (l, h) = parsed.ok_or_else(|| {
                Error::format("head mask", format!("line {}: expected `layer,head`", n + 1))
            })?;
            m.insert(l, h);
        }
        Ok(m)
    }
}

impl FromIterator<(usize, usize)> for HeadMask {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self {
            heads: iter.into_iter().collect(),
        }
    }
}

/// Precomputed rotary cos/sin tables, `[max_seq_len, head_size / 2]`.
#[derive(Debug, Clone)]
pub(crate) struct Rope<T> {
    pub cos: Vec<T>,
    pub sin: Vec<T>,
    pub half: usize,
}

impl<T: Real> Rope<T> {
    fn new(c: &ModelConfig) -> Self {
        let half = c.head_size / 2;
        let mut cos = Vec::with_capacity(c.max_seq_len * half);
        let mut sin = Vec::with_capacity(c.max_seq_len * half);
        for pos in 0..c.max_seq_len {
            for i in 0..half {
                let freq = c.rope_theta.powf(-(2.0 * i as f64) / c.head_size as f64);
                let angle = pos as f64 * freq;
                cos.push(T::of(angle.cos()));
                sin.push(T::of(angle.sin()));
            }
        }
        Self { cos, sin, half }
    }

    /// Rotate one head vector (rotate-half pairing `i <-> i + half`) to `pos`.
    /// `inverse` applies the transpose rotation, used in the backward pass.
    #[inline]
    pub fn apply(&self, x: &mut [T], pos: usize, inverse: bool) {
        let h = self.half;
        let (cos, sin) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (a, b) = (x[i], x[i + h]);
            let s = if inverse { -sin[i] } else { sin[i] };
            x[i] = a * cos[i] - b * s;
            x[i + h] = b * cos[i] + a * s;
        }
    }
}

/// The model: config, layout, flat parameters.
#[derive(Debug, Clone)]
pub struct Transformer<T: Real> {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<T>,
    rope: Rope<T>,
}

impl<T: Real> Transformer<T> {
    /// Deterministic initialization: N(0, 0.02) weights, unit norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = vec![T::zero(); layout.total()];
        for entry in layout.entries() {
            let slot = &mut params[entry.range()];
            if entry.is_norm() {
                slot.fill(T::one());
            } else {
                for p in slot {
                    *p = T::of(normal.sample(&mut rng));
                }
            }
        }
        Ok(Self::from_params(config, params).expect("layout sized"))
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(Error::config(format!(
                "parameter buffer has {} values, config needs {}",
                params.len(),
                layout.total()
            )));
        }
        let rope = Rope::new(&config);
        Ok(Self {
            config,
            layout,
            params,
            rope,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|e| &self.params[e.range()])
    }

    /// Static embedding row of `id`.
    pub fn embedding(&self, id: TokenId) -> &[T] {
        let d = self.config.hidden_dim;
        let at = self.layout.embed + id as usize * d;
        &self.params[at..at + d]
    }

    /// A view that applies `mask` on every forward call.
    pub fn with_head_mask(&self, mask: HeadMask) -> Result<MaskedModel<'_, T>> {
        mask.validate(&self.config)?;
        Ok(MaskedModel { model: self, mask })
    }

    /// Cast every parameter into another precision.
    pub fn cast<U: Real>(&self) -> Transformer<U> {
        let params = self.params.iter().map(|p| U::of(p.f64())).collect();
        Transformer::from_params(self.config.clone(), params).expect("same layout")
    }
}

/// Borrowed model plus a fixed head mask.
#[derive(Debug, Clone)]
pub struct MaskedModel<'a, T: Real> {
    model: &'a Transformer<T>,
    mask: HeadMask,
}

impl<'a, T: Real> MaskedModel<'a, T> {
    pub fn model(&self) -> &'a Transformer<T> {
        self.model
    }

    pub fn mask(&self) -> &HeadMask {
        &self.mask
    }

    pub fn forward(&self, ids: &[TokenId], capture_attention: bool, capture_hidden: bool) -> Result<ForwardOutput<T>> {
        self.model.forward(
            ids,
            &ForwardOptions {
                mask: Some(&self.mask),
                capture_attention,
                capture_hidden,
                segments: None,
            },
        )
    }
}
