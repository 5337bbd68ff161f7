use super::forward::Trace;
use super::Transformer;
use crate::error::Result;
use crate::tensor::{gelu, gelu_grad, gemm, log_sum_exp, Real, View, ViewMut};
use crate::tokenizer::TokenId;

/// Backward through `y = x * inv_rms * gain`; returns `dx`, accumulates `dgain`.
fn rms_norm_backward<T: Real>(x: &[T], inv: &[T], gain: &[T], dy: &[T], dgain: &mut [T], d: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); x.len()];
    let inv_d = T::of(1.0 / d as f64);
    for (r, &ir) in inv.iter().enumerate() {
        let xs = &x[r * d..(r + 1) * d];
        let dys = &dy[r * d..(r + 1) * d];
        let mut dot = T::zero();
        for i in 0..d {
            let g = dys[i] * gain[i];
            dgain[i] += dys[i] * xs[i] * ir;
            dot += g * xs[i];
        }
        let coef = ir * ir * ir * dot * inv_d;
        for i in 0..d {
            dx[r * d + i] = ir * dys[i] * gain[i] - xs[i] * coef;
        }
    }
    dx
}

impl<T: Real> Transformer<T> {
    /// Forward + backward of the summed next-token cross-entropy.
    ///
    /// `targets[t]` is the token position `t` must predict, or `None` when the
    /// position is excluded from the loss. Gradients of `weight * sum_loss`
    /// are added into `grads` (same layout as the parameters). Returns the
    /// unweighted summed loss and the number of counted positions.
    pub fn accumulate_gradients(
        &self,
        ids: &[TokenId],
        targets: &[Option<TokenId>],
        weight: T,
        segments: Option<&[u32]>,
        grads: &mut [T],
    ) -> Result<(f64, usize)> {
        assert_eq!(targets.len(), ids.len(), "one target slot per position");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer layout");
        self.check_input(
            ids,
            &super::ForwardOptions {
                segments,
                ..Default::default()
            },
        )?;
        let trace = self.run(ids, None, segments);
        let v = self.config.vocab_size;
        let mut dlogits = vec![T::zero(); trace.logits.len()];
        let mut loss = 0.0;
        let mut count = 0;
        for (t, target) in targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            let row = &trace.logits[t * v..(t + 1) * v];
            let lse = log_sum_exp(row);
            loss += (lse - row[target as usize]).f64();
            count += 1;
            let drow = &mut dlogits[t * v..(t + 1) * v];
            for (dz, &z) in drow.iter_mut().zip(row) {
                *dz = (z - lse).exp() * weight;
            }
            drow[target as usize] -= weight;
        }
        if count > 0 {
            self.backward(&trace, &dlogits, grads);
        }
        Ok((loss, count))
    }

    /// Backprop of `dlogits` through an unmasked trace; attention restrictions
    /// are already encoded as zero probabilities.
    pub(crate) fn backward(&self, trace: &Trace<T>, dlogits: &[T], grads: &mut [T]) {
        let c = &self.config;
        let p = &self.params;
        let (d, qd, kvd, inter, hs) = (c.hidden_dim, c.q_dim(), c.kv_dim(), c.intermediate_size, c.head_size);
        let seq = trace.ids.len();
        let v = c.vocab_size;
        let scale = T::of(1.0 / (hs as f64).sqrt());
        let embed = self.layout.embed;

        // Tied output projection.
        let mut dxn = vec![T::zero(); seq * d];
        gemm(View::new(dlogits, seq, v), View::new(&p[embed..], v, d), ViewMut::new(&mut dxn, seq, d), false);
        gemm(
            View::new(dlogits, seq, v).t(),
            View::new(&trace.xn_f, seq, d),
            ViewMut::new(&mut grads[embed..embed + v * d], v, d),
            true,
        );
        let fnorm = self.layout.final_norm;
        let mut dx = {
            let (gain, dgain) = (&p[fnorm..fnorm + d], &mut grads[fnorm..fnorm + d]);
            rms_norm_backward(&trace.x_out, &trace.inv_rms_f, gain, &dxn, dgain, d)
        };

        for (off, lt) in self.layout.layers.iter().zip(&trace.layers).rev() {
            // MLP sublayer: out = h + down(gelu(gate) * up).
            let mut dact = vec![T::zero(); seq * inter];
            gemm(View::new(&dx, seq, d), View::new(&p[off.w_down..], inter, d).t(), ViewMut::new(&mut dact, seq, inter), false);
            gemm(
                View::new(&lt.act, seq, inter).t(),
                View::new(&dx, seq, d),
                ViewMut::new(&mut grads[off.w_down..off.w_down + inter * d], inter, d),
                true,
            );
            let mut dgate = vec![T::zero(); seq * inter];
            let mut dup = vec![T::zero(); seq * inter];
            for i in 0..seq * inter {
                dgate[i] = dact[i] * lt.up[i] * gelu_grad(lt.gate[i]);
                dup[i] = dact[i] * gelu(lt.gate[i]);
            }
            let mut dxn2 = vec![T::zero(); seq * d];
            gemm(View::new(&dgate, seq, inter), View::new(&p[off.w_gate..], d, inter).t(), ViewMut::new(&mut dxn2, seq, d), false);
            gemm(View::new(&dup, seq, inter), View::new(&p[off.w_up..], d, inter).t(), ViewMut::new(&mut dxn2, seq, d), true);
            gemm(
                View::new(&lt.xn2, seq, d).t(),
                View::new(&dgate, seq, inter),
                ViewMut::new(&mut grads[off.w_gate..off.w_gate + d * inter], d, inter),
                true,
            );
            gemm(
                View::new(&lt.xn2, seq, d).t(),
                View::new(&dup, seq, inter),
                ViewMut::new(&mut grads[off.w_up..off.w_up + d * inter], d, inter),
                true,
            );
            let dh_norm = {
                let (gain, dgain) = (&p[off.mlp_norm..off.mlp_norm + d], &mut grads[off.mlp_norm..off.mlp_norm + d]);
                rms_norm_backward(&lt.h, &lt.inv_rms2, gain, &dxn2, dgain, d)
            };
            let dh: Vec<T> = dx.iter().zip(&dh_norm).map(|(&a, &b)| a + b).collect();

            // Attention sublayer: h = x + heads * Wo.
            let mut dheads = vec![T::zero(); seq * qd];
            gemm(View::new(&dh, seq, d), View::new(&p[off.wo..], qd, d).t(), ViewMut::new(&mut dheads, seq, qd), false);
            gemm(
                View::new(&lt.heads, seq, qd).t(),
                View::new(&dh, seq, d),
                ViewMut::new(&mut grads[off.wo..off.wo + qd * d], qd, d),
                true,
            );

            let mut dq = vec![T::zero(); seq * qd];
            let mut dk = vec![T::zero(); seq * kvd];
            let mut dv = vec![T::zero(); seq * kvd];
            let mut dp = vec![T::zero(); seq * seq];
            for h in 0..c.num_heads {
                let g = h / c.group_size();
                let pm = &lt.probs[h * seq * seq..(h + 1) * seq * seq];
                // dP = dO V^T, dV += P^T dO.
                gemm(
                    View::cols(&dheads, seq, qd, h * hs, hs),
                    View::cols(&lt.v, seq, kvd, g * hs, hs).t(),
                    ViewMut::new(&mut dp, seq, seq),
                    false,
                );
                gemm(
                    View::new(pm, seq, seq).t(),
                    View::cols(&dheads, seq, qd, h * hs, hs),
                    ViewMut::cols(&mut dv, seq, kvd, g * hs, hs),
                    true,
                );
                // Softmax backward; masked-out entries have P = 0 and drop out.
                for i in 0..seq {
                    let prow = &pm[i * seq..(i + 1) * seq];
                    let drow = &mut dp[i * seq..(i + 1) * seq];
                    let dot: T = prow[..=i].iter().zip(&drow[..=i]).map(|(&a, &b)| a * b).sum();
                    for j in 0..seq {
                        drow[j] = prow[j] * (drow[j] - dot) * scale;
                    }
                }
                gemm(
                    View::new(&dp, seq, seq),
                    View::cols(&lt.k, seq, kvd, g * hs, hs),
                    ViewMut::cols(&mut dq, seq, qd, h * hs, hs),
                    false,
                );
                gemm(
                    View::new(&dp, seq, seq).t(),
                    View::cols(&lt.q, seq, qd, h * hs, hs),
                    ViewMut::cols(&mut dk, seq, kvd, g * hs, hs),
                    true,
                );
            }
            for t in 0..seq {
                for h in 0..c.num_heads {
                    self.rope.apply(&mut dq[t * qd + h * hs..t * qd + (h + 1) * hs], t, true);
                }
                for g in 0..c.num_kv_heads {
                    self.rope.apply(&mut dk[t * kvd + g * hs..t * kvd + (g + 1) * hs], t, true);
                }
            }
            let mut dxn1 = vec![T::zero(); seq * d];
            gemm(View::new(&dq, seq, qd), View::new(&p[off.wq..], d, qd).t(), ViewMut::new(&mut dxn1, seq, d), false);
            gemm(View::new(&dk, seq, kvd), View::new(&p[off.wk..], d, kvd).t(), ViewMut::new(&mut dxn1, seq, d), true);
            gemm(View::new(&dv, seq, kvd), View::new(&p[off.wv..], d, kvd).t(), ViewMut::new(&mut dxn1, seq, d), true);
            for (w, dw, n) in [(off.wq, &dq, qd), (off.wk, &dk, kvd), (off.wv, &dv, kvd)] {
                gemm(
                    View::new(&lt.xn1, seq, d).t(),
                    View::new(dw, seq, n),
                    ViewMut::new(&mut grads[w..w + d * n], d, n),
                    true,
                );
            }
            let dx_norm = {
                let (gain, dgain) = (&p[off.attn_norm..off.attn_norm + d], &mut grads[off.attn_norm..off.attn_norm + d]);
                rms_norm_backward(&lt.x_in, &lt.inv_rms1, gain, &dxn1, dgain, d)
            };
            dx = dh.iter().zip(&dx_norm).map(|(&a, &b)| a + b).collect();
        }

        for (t, &id) in trace.ids.iter().enumerate() {
            let row = &mut grads[embed + id as usize * d..embed + (id as usize + 1) * d];
            for (g, &v) in row.iter_mut().zip(&dx[t * d..(t + 1) * d]) {
                *g += v;
            }
        }
    }
}
