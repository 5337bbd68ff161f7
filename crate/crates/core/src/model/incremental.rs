use super::forward::rms_norm;
use super::{HeadMask, Transformer};
use crate::error::{Error, Result};
use crate::tensor::{gelu, matmul, softmax_in_place, Real};
use crate::tokenizer::TokenId;

/// Key/value cache for token-by-token decoding.
///
/// Keys are stored after the rotary transform, so a step only needs the
/// new token's position.
#[derive(Debug, Clone)]
pub struct DecodeState<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

impl<T> DecodeState<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<T: Real> Transformer<T> {
    /// Runs the prompt in one pass; returns the cache and last-position logits.
    pub fn prefill(&self, ids: &[TokenId], mask: Option<&HeadMask>) -> Result<(DecodeState<T>, Vec<T>)> {
        self.check_input(
            ids,
            &super::ForwardOptions {
                mask,
                ..Default::default()
            },
        )?;
        let trace = self.run(ids, mask, None);
        let v = self.config.vocab_size;
        let last = trace.logits[(ids.len() - 1) * v..].to_vec();
        let state = DecodeState {
            keys: trace.layers.iter().map(|lt| lt.k.clone()).collect(),
            values: trace.layers.iter().map(|lt| lt.v.clone()).collect(),
            len: ids.len(),
        };
        Ok((state, last))
    }

    /// Appends one token and returns its next-token logits.
    pub fn step(&self, state: &mut DecodeState<T>, id: TokenId, mask: Option<&HeadMask>) -> Result<Vec<T>> {
        let c = &self.config;
        if state.len >= c.max_seq_len {
            return Err(Error::input(format!("decode would exceed max_seq_len {}", c.max_seq_len)));
        }
        if id as usize >= c.vocab_size {
            return Err(Error::input(format!("token id {id} outside vocab {}", c.vocab_size)));
        }
        let p = &self.params;
        let (d, qd, kvd, inter, hs) = (c.hidden_dim, c.q_dim(), c.kv_dim(), c.intermediate_size, c.head_size);
        let pos = state.len;
        let n = pos + 1;
        let scale = T::of(1.0 / (hs as f64).sqrt());
        let mut x = self.embedding(id).to_vec();

        for (l, off) in self.layout.layers.iter().enumerate() {
            let (xn1, _) = rms_norm(&x, &p[off.attn_norm..off.attn_norm + d], d, c.rmsnorm_eps);
            let mut q = matmul(&xn1, &p[off.wq..off.wq + d * qd], 1, d, qd);
            let mut k = matmul(&xn1, &p[off.wk..off.wk + d * kvd], 1, d, kvd);
            let v = matmul(&xn1, &p[off.wv..off.wv + d * kvd], 1, d, kvd);
            for h in 0..c.num_heads {
                self.rope.apply(&mut q[h * hs..(h + 1) * hs], pos, false);
            }
            for g in 0..c.num_kv_heads {
                self.rope.apply(&mut k[g * hs..(g + 1) * hs], pos, false);
            }
            let keys = &mut state.keys[l];
            let values = &mut state.values[l];
            keys.truncate(pos * kvd);
            values.truncate(pos * kvd);
            keys.extend_from_slice(&k);
            values.extend_from_slice(&v);

            let mut heads = vec![T::zero(); qd];
            let mut scores = vec![T::zero(); n];
            for h in 0..c.num_heads {
                if mask.is_some_and(|m| m.contains(l, h)) {
                    continue;
                }
                let g = h / c.group_size();
                let qh = &q[h * hs..(h + 1) * hs];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &keys[j * kvd + g * hs..j * kvd + (g + 1) * hs];
                    *s = qh.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut heads[h * hs..(h + 1) * hs];
                for (j, &w) in scores.iter().enumerate() {
                    let vj = &values[j * kvd + g * hs..j * kvd + (g + 1) * hs];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += w * vv;
                    }
                }
            }
            let attn = matmul(&heads, &p[off.wo..off.wo + qd * d], 1, qd, d);
            for (xi, a) in x.iter_mut().zip(attn) {
                *xi += a;
            }
            let (xn2, _) = rms_norm(&x, &p[off.mlp_norm..off.mlp_norm + d], d, c.rmsnorm_eps);
            let gate = matmul(&xn2, &p[off.w_gate..off.w_gate + d * inter], 1, d, inter);
            let up = matmul(&xn2, &p[off.w_up..off.w_up + d * inter], 1, d, inter);
            let act: Vec<T> = gate.iter().zip(&up).map(|(&g, &u)| gelu(g) * u).collect();
            let down = matmul(&act, &p[off.w_down..off.w_down + inter * d], 1, inter, d);
            for (xi, m) in x.iter_mut().zip(down) {
                *xi += m;
            }
        }
        state.len = n;
        let fnorm = self.layout.final_norm;
        let (xn, _) = rms_norm(&x, &p[fnorm..fnorm + d], d, c.rmsnorm_eps);
        let mut logits = vec![T::zero(); c.vocab_size];
        for (t, z) in logits.iter_mut().enumerate() {
            let row = &p[self.layout.embed + t * d..self.layout.embed + (t + 1) * d];
            *z = row.iter().zip(&xn).map(|(&a, &b)| a * b).sum();
        }
        Ok(logits)
    }
}
