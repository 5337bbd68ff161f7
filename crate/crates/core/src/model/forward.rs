use super::{HeadMask, Transformer};
use crate::error::{Error, Result};
use crate::tensor::{gelu, gemm, softmax_in_place, Real, View, ViewMut};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    pub mask: Option<&'a HeadMask>,
    pub capture_attention: bool,
    pub capture_hidden: bool,
    /// Per-position segment ids; when set, attention is block-diagonal.
    pub segments: Option<&'a [u32]>,
}

/// Attention weights of every head, stored at `f32`.
///
/// `matrix(l, h)[i * seq_len + j]` is the weight query position `i` puts on
/// key position `j`; rows sum to one and entries above the diagonal are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub seq_len: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    weights: Vec<f32>,
    masked: Vec<bool>,
}

impl AttentionRecord {
    pub fn new(num_layers: usize, num_heads: usize, seq_len: usize) -> Self {
        Self {
            seq_len,
            num_layers,
            num_heads,
            weights: vec![0.0; num_layers * num_heads * seq_len * seq_len],
            masked: vec![false; num_layers * num_heads],
        }
    }

    fn offset(&self, layer: usize, head: usize) -> usize {
        (layer * self.num_heads + head) * self.seq_len * self.seq_len
    }

    pub fn matrix(&self, layer: usize, head: usize) -> &[f32] {
        let at = self.offset(layer, head);
        &self.weights[at..at + self.seq_len * self.seq_len]
    }

    pub fn matrix_mut(&mut self, layer: usize, head: usize) -> &mut [f32] {
        let at = self.offset(layer, head);
        let n = self.seq_len * self.seq_len;
        &mut self.weights[at..at + n]
    }

    /// Weight from query `i` to key `j`.
    pub fn get(&self, layer: usize, head: usize, i: usize, j: usize) -> f32 {
        self.matrix(layer, head)[i * self.seq_len + j]
    }

    /// Whether the head's output was zeroed in the run that produced this record.
    pub fn is_masked(&self, layer: usize, head: usize) -> bool {
        self.masked[layer * self.num_heads + head]
    }

    pub(crate) fn set_masked(&mut self, layer: usize, head: usize, masked: bool) {
        let i = layer * self.num_heads + head;
        self.masked[i] = masked;
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[seq_len, vocab_size]`.
    pub logits: Vec<T>,
    pub attention: Option<AttentionRecord>,
    /// `num_layers + 1` matrices of `[seq_len, hidden_dim]`: the embedding
    /// output first, then each block's output; the last entry is taken after
    /// the final norm.
    pub hidden: Option<Vec<Vec<T>>>,
}

/// Activations of one block kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace<T> {
    pub x_in: Vec<T>,
    pub inv_rms1: Vec<T>,
    pub xn1: Vec<T>,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// `[num_heads, seq, seq]`.
    pub probs: Vec<T>,
    pub heads: Vec<T>,
    pub h: Vec<T>,
    pub inv_rms2: Vec<T>,
    pub xn2: Vec<T>,
    pub gate: Vec<T>,
    pub up: Vec<T>,
    pub act: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub ids: Vec<TokenId>,
    pub layers: Vec<LayerTrace<T>>,
    pub x_out: Vec<T>,
    pub inv_rms_f: Vec<T>,
    pub xn_f: Vec<T>,
    pub logits: Vec<T>,
}

/// `y = x * inv_rms * gain`, row-wise.
pub(crate) fn rms_norm<T: Real>(x: &[T], gain: &[T], d: usize, eps: f64) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut inv = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let ms = row.iter().map(|&v| v.f64() * v.f64()).sum::<f64>() / d as f64;
        let ir = T::of(1.0 / (ms + eps).sqrt());
        inv[r] = ir;
        for (o, (&v, &g)) in y[r * d..(r + 1) * d].iter_mut().zip(row.iter().zip(gain)) {
            *o = v * ir * g;
        }
    }
    (y, inv)
}

pub(crate) fn attention_allowed(segments: Option<&[u32]>, i: usize, j: usize) -> bool {
    j <= i && segments.is_none_or(|s| s[i] == s[j])
}

impl<T: Real> Transformer<T> {
    pub fn forward(&self, ids: &[TokenId], opts: &ForwardOptions<'_>) -> Result<ForwardOutput<T>> {
        self.check_input(ids, opts)?;
        let trace = self.run(ids, opts.mask, opts.segments);
        let c = &self.config;
        let seq = ids.len();

        let attention = opts.capture_attention.then(|| {
            let mut rec = AttentionRecord::new(c.num_layers, c.num_heads, seq);
            for (l, lt) in trace.layers.iter().enumerate() {
                for h in 0..c.num_heads {
                    let src = &lt.probs[h * seq * seq..(h + 1) * seq * seq];
                    for (dst, &p) in rec.matrix_mut(l, h).iter_mut().zip(src) {
                        *dst = p.f64() as f32;
                    }
                    rec.set_masked(l, h, opts.mask.is_some_and(|m| m.contains(l, h)));
                }
            }
            rec
        });
        let hidden = opts.capture_hidden.then(|| {
            let mut states: Vec<Vec<T>> = trace.layers.iter().map(|lt| lt.x_in.clone()).collect();
            states.push(trace.xn_f.clone());
            states
        });
        Ok(ForwardOutput {
            logits: trace.logits,
            attention,
            hidden,
        })
    }

    /// Plain logits with no mask and no capture.
    pub fn logits(&self, ids: &[TokenId]) -> Result<Vec<T>> {
        Ok(self.forward(ids, &ForwardOptions::default())?.logits)
    }

    pub(crate) fn check_input(&self, ids: &[TokenId], opts: &ForwardOptions<'_>) -> Result<()> {
        let c = &self.config;
        if ids.is_empty() {
            return Err(Error::input("empty input sequence"));
        }
        if ids.len() > c.max_seq_len {
            return Err(Error::input(format!(
                "sequence length {} exceeds max_seq_len {}",
                ids.len(),
                c.max_seq_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= c.vocab_size) {
            return Err(Error::input(format!("token id {bad} outside vocab {}", c.vocab_size)));
        }
        if let Some(m) = opts.mask {
            m.validate(c)?;
        }
        if let Some(s) = opts.segments {
            if s.len() != ids.len() {
                return Err(Error::input("segment ids must match sequence length"));
            }
            if s.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::input("segment ids must be non-decreasing"));
            }
        }
        Ok(())
    }

    /// Full forward pass keeping every activation.
    pub(crate) fn run(&self, ids: &[TokenId], mask: Option<&HeadMask>, segments: Option<&[u32]>) -> Trace<T> {
        let c = &self.config;
        let p = &self.params;
        let (d, qd, kvd, inter, hs) = (c.hidden_dim, c.q_dim(), c.kv_dim(), c.intermediate_size, c.head_size);
        let seq = ids.len();
        let scale = T::of(1.0 / (hs as f64).sqrt());

        let mut x = Vec::with_capacity(seq * d);
        for &id in ids {
            x.extend_from_slice(self.embedding(id));
        }

        let mut layers = Vec::with_capacity(c.num_layers);
        for (l, off) in self.layout.layers.iter().enumerate() {
            let (xn1, inv_rms1) = rms_norm(&x, &p[off.attn_norm..off.attn_norm + d], d, c.rmsnorm_eps);
            let mut q = vec![T::zero(); seq * qd];
            let mut k = vec![T::zero(); seq * kvd];
            let mut v = vec![T::zero(); seq * kvd];
            gemm(View::new(&xn1, seq, d), View::new(&p[off.wq..], d, qd), ViewMut::new(&mut q, seq, qd), false);
            gemm(View::new(&xn1, seq, d), View::new(&p[off.wk..], d, kvd), ViewMut::new(&mut k, seq, kvd), false);
            gemm(View::new(&xn1, seq, d), View::new(&p[off.wv..], d, kvd), ViewMut::new(&mut v, seq, kvd), false);
            for t in 0..seq {
                for h in 0..c.num_heads {
                    self.rope.apply(&mut q[t * qd + h * hs..t * qd + (h + 1) * hs], t, false);
                }
                for g in 0..c.num_kv_heads {
                    self.rope.apply(&mut k[t * kvd + g * hs..t * kvd + (g + 1) * hs], t, false);
                }
            }

            let mut probs = vec![T::zero(); c.num_heads * seq * seq];
            let mut heads = vec![T::zero(); seq * qd];
            for h in 0..c.num_heads {
                let g = h / c.group_size();
                let pm = &mut probs[h * seq * seq..(h + 1) * seq * seq];
                gemm(
                    View::cols(&q, seq, qd, h * hs, hs),
                    View::cols(&k, seq, kvd, g * hs, hs).t(),
                    ViewMut::new(pm, seq, seq),
                    false,
                );
                for i in 0..seq {
                    let row = &mut pm[i * seq..(i + 1) * seq];
                    // Segments are contiguous runs, so the allowed keys form one span.
                    let start = (0..=i).find(|&j| attention_allowed(segments, i, j)).unwrap_or(i);
                    row[..start].fill(T::zero());
                    row[i + 1..].fill(T::zero());
                    let span = &mut row[start..=i];
                    for s in span.iter_mut() {
                        *s *= scale;
                    }
                    softmax_in_place(span);
                }
                if mask.is_some_and(|m| m.contains(l, h)) {
                    continue;
                }
                gemm(
                    View::new(pm, seq, seq),
                    View::cols(&v, seq, kvd, g * hs, hs),
                    ViewMut::cols(&mut heads, seq, qd, h * hs, hs),
                    false,
                );
            }

            let mut hres = x.clone();
            gemm(View::new(&heads, seq, qd), View::new(&p[off.wo..], qd, d), ViewMut::new(&mut hres, seq, d), true);

            let (xn2, inv_rms2) = rms_norm(&hres, &p[off.mlp_norm..off.mlp_norm + d], d, c.rmsnorm_eps);
            let mut gate = vec![T::zero(); seq * inter];
            let mut up = vec![T::zero(); seq * inter];
            gemm(View::new(&xn2, seq, d), View::new(&p[off.w_gate..], d, inter), ViewMut::new(&mut gate, seq, inter), false);
            gemm(View::new(&xn2, seq, d), View::new(&p[off.w_up..], d, inter), ViewMut::new(&mut up, seq, inter), false);
            let act: Vec<T> = gate.iter().zip(&up).map(|(&g, &u)| gelu(g) * u).collect();
            let mut out = hres.clone();
            gemm(View::new(&act, seq, inter), View::new(&p[off.w_down..], inter, d), ViewMut::new(&mut out, seq, d), true);

            layers.push(LayerTrace {
                x_in: std::mem::replace(&mut x, out),
                inv_rms1,
                xn1,
                q,
                k,
                v,
                probs,
                heads,
                h: hres,
                inv_rms2,
                xn2,
                gate,
                up,
                act,
            });
        }

        let (xn_f, inv_rms_f) = rms_norm(&x, &p[self.layout.final_norm..self.layout.final_norm + d], d, c.rmsnorm_eps);
        let mut logits = vec![T::zero(); seq * c.vocab_size];
        gemm(
            View::new(&xn_f, seq, d),
            View::new(&p[self.layout.embed..], c.vocab_size, d).t(),
            ViewMut::new(&mut logits, seq, c.vocab_size),
            false,
        );
        Trace {
            ids: ids.to_vec(),
            layers,
            x_out: x,
            inv_rms_f,
            xn_f,
            logits,
        }
    }
}
