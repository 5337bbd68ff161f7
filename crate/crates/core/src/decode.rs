//! Beam-search translation over the prompt format.

use serde::{Deserialize, Serialize};

use crate::corpus::format_source;
use crate::error::{Error, Result};
use crate::model::{DecodeState, HeadMask, Transformer};
use crate::tensor::log_sum_exp;
use crate::tokenizer::{TokenId, Vocabulary};

/// Anything that yields next-token log-probabilities incrementally.
pub trait StepModel {
    type State: Clone;

    /// Consumes the prefix; returns the state and next-token log-probs.
    fn start(&self, prefix: &[TokenId]) -> Result<(Self::State, Vec<f64>)>;

    /// Appends `token`; returns the following log-probs.
    fn advance(&self, state: &mut Self::State, token: TokenId) -> Result<Vec<f64>>;

    /// How many more tokens the model can take after `prefix_len`.
    fn room(&self, prefix_len: usize) -> usize {
        usize::MAX - prefix_len
    }
}

/// The transformer with an optional head mask, decoded through its KV cache.
#[derive(Debug, Clone, Copy)]
pub struct Decoder<'a> {
    pub model: &'a Transformer<f32>,
    pub mask: Option<&'a HeadMask>,
}

fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let wide: Vec<f64> = logits.iter().map(|&x| x as f64).collect();
    let lse = log_sum_exp(&wide);
    wide.iter().map(|x| x - lse).collect()
}

impl StepModel for Decoder<'_> {
    type State = DecodeState<f32>;

    fn start(&self, prefix: &[TokenId]) -> Result<(Self::State, Vec<f64>)> {
        let (state, logits) = self.model.prefill(prefix, self.mask)?;
        Ok((state, log_softmax(&logits)))
    }

    fn advance(&self, state: &mut Self::State, token: TokenId) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.model.step(state, token, self.mask)?))
    }

    fn room(&self, prefix_len: usize) -> usize {
        self.model.config().max_seq_len.saturating_sub(prefix_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_new_tokens: usize,
    /// Scores are `log_prob / len^alpha`; 1.0 is the mean log-probability.
    pub length_penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            max_new_tokens: 512,
            length_penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, without the EOS.
    pub tokens: Vec<TokenId>,
    /// Summed log-probability, including the EOS when it was produced.
    pub log_prob: f64,
    /// Length-normalized score used for ranking.
    pub score: f64,
    pub finished: bool,
}

fn normalized(log_prob: f64, len: usize, alpha: f64) -> f64 {
    if len == 0 {
        log_prob
    } else {
        log_prob / (len as f64).powf(alpha)
    }
}

struct Beam<S> {
    state: S,
    tokens: Vec<TokenId>,
    log_prob: f64,
    next: Vec<f64>,
}

/// Beam search from `prefix` until `beam_size` hypotheses end in `eos_id`
/// or `max_new_tokens` is reached.
///
/// Candidates are ranked by cumulative log-probability with ties broken by
/// token id then beam order. An EOS candidate finishes a hypothesis when it
/// ranks within the top `beam_size`; the best finished hypothesis under the
/// length-normalized score is returned.
pub fn beam_search<M: StepModel>(model: &M, prefix: &[TokenId], cfg: &BeamConfig, eos_id: TokenId) -> Result<Hypothesis> {
    if cfg.beam_size < 1 {
        return Err(Error::config("beam_size must be at least 1"));
    }
    let k = cfg.beam_size;
    let max_new = cfg.max_new_tokens.min(model.room(prefix.len()));
    let (state, next) = model.start(prefix)?;
    let mut beams = vec![Beam {
        state,
        tokens: Vec::new(),
        log_prob: 0.0,
        next,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..max_new {
        let mut cands: Vec<(f64, TokenId, usize)> = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            let mut local: Vec<(f64, TokenId, usize)> = beam
                .next
                .iter()
                .enumerate()
                .map(|(v, &lp)| (beam.log_prob + lp, v as TokenId, b))
                .collect();
            // Only the top 2k of each beam can survive.
            local.sort_by(rank);
            local.truncate(2 * k);
            cands.extend(local);
        }
        cands.sort_by(rank);

        let mut survivors: Vec<(usize, TokenId, f64)> = Vec::with_capacity(k);
        for (r, &(lp, tok, b)) in cands.iter().enumerate() {
            if tok == eos_id {
                if r < k {
                    let tokens = beams[b].tokens.clone();
                    let len = tokens.len() + 1;
                    finished.push(Hypothesis {
                        tokens,
                        log_prob: lp,
                        score: normalized(lp, len, cfg.length_penalty),
                        finished: true,
                    });
                }
                continue;
            }
            survivors.push((b, tok, lp));
            if survivors.len() == k {
                break;
            }
        }
        if finished.len() >= k || survivors.is_empty() {
            beams.clear();
            break;
        }
        let last_step = step + 1 == max_new;
        let mut next_beams = Vec::with_capacity(survivors.len());
        for (b, tok, lp) in survivors {
            let mut state = beams[b].state.clone();
            let mut tokens = beams[b].tokens.clone();
            tokens.push(tok);
            let next = if last_step { Vec::new() } else { model.advance(&mut state, tok)? };
            next_beams.push(Beam {
                state,
                tokens,
                log_prob: lp,
                next,
            });
        }
        beams = next_beams;
    }

    for beam in beams {
        let len = beam.tokens.len();
        finished.push(Hypothesis {
            score: normalized(beam.log_prob, len, cfg.length_penalty),
            tokens: beam.tokens,
            log_prob: beam.log_prob,
            finished: false,
        });
    }
    let mut best: Option<Hypothesis> = None;
    for h in finished {
        if best.as_ref().is_none_or(|b| h.score > b.score) {
            best = Some(h);
        }
    }
    Ok(best.expect("at least one hypothesis"))
}

fn rank(a: &(f64, TokenId, usize), b: &(f64, TokenId, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslateOptions {
    pub beam: BeamConfig,
    /// Put a BOS where the source tag would go.
    pub ablate_source_tag: bool,
}

/// Translates one sentence; the result never contains special tokens.
pub fn translate(
    model: &Transformer<f32>,
    mask: Option<&HeadMask>,
    vocab: &Vocabulary,
    src_lang: &str,
    tgt_lang: &str,
    text: &str,
    opts: &TranslateOptions,
) -> Result<String> {
    let (prefix, _) = format_source(vocab, src_lang, tgt_lang, text, opts.ablate_source_tag)?;
    let hyp = beam_search(&Decoder { model, mask }, &prefix, &opts.beam, vocab.eos_id())?;
    Ok(vocab.decode_text(&hyp.tokens)?.trim().to_string())
}

/// Line-aligned translation of many sentences.
pub fn translate_all(
    model: &Transformer<f32>,
    mask: Option<&HeadMask>,
    vocab: &Vocabulary,
    src_lang: &str,
    tgt_lang: &str,
    lines: &[String],
    opts: &TranslateOptions,
) -> Result<Vec<String>> {
    lines
        .iter()
        .map(|l| translate(model, mask, vocab, src_lang, tgt_lang, l, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log-probs depend on the generated tokens only, via a lookup table.
    struct Table<F: Fn(&[TokenId]) -> Vec<f64>>(F);

    impl<F: Fn(&[TokenId]) -> Vec<f64>> StepModel for Table<F> {
        type State = Vec<TokenId>;

        fn start(&self, _prefix: &[TokenId]) -> Result<(Vec<TokenId>, Vec<f64>)> {
            Ok((Vec::new(), (self.0)(&[])))
        }

        fn advance(&self, state: &mut Vec<TokenId>, token: TokenId) -> Result<Vec<f64>> {
            state.push(token);
            Ok((self.0)(state))
        }
    }

    fn ln(p: [f64; 3]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    /// Token 0 is EOS. Greedy takes token 1 first, but the best path starts with 2.
    fn garden_path(gen: &[TokenId]) -> Vec<f64> {
        match gen {
            [] => ln([0.1, 0.5, 0.4]),
            [1] => ln([0.3, 0.35, 0.35]),
            [2] => ln([0.9, 0.05, 0.05]),
            [1, _] => ln([0.5, 0.25, 0.25]),
            _ => ln([0.4, 0.3, 0.3]),
        }
    }

    fn brute_force(f: &dyn Fn(&[TokenId]) -> Vec<f64>, max_len: usize) -> (Vec<TokenId>, f64) {
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        fn walk(f: &dyn Fn(&[TokenId]) -> Vec<f64>, gen: &mut Vec<TokenId>, lp: f64, max_len: usize, best: &mut (Vec<TokenId>, f64)) {
            if gen.len() == max_len {
                if lp > best.1 {
                    *best = (gen.clone(), lp);
                }
                return;
            }
            let next = f(gen);
            if lp + next[0] > best.1 {
                *best = (gen.clone(), lp + next[0]);
            }
            for t in 1..3 {
                gen.push(t);
                walk(f, gen, lp + next[t as usize], max_len, best);
                gen.pop();
            }
        }
        walk(f, &mut Vec::new(), 0.0, max_len, &mut best);
        best
    }

    #[test]
    fn beam_two_finds_best_product_path() {
        let cfg = BeamConfig {
            beam_size: 2,
            max_new_tokens: 3,
            length_penalty: 0.0,
        };
        let h = beam_search(&Table(garden_path), &[], &cfg, 0).unwrap();
        let (path, lp) = brute_force(&garden_path, 3);
        assert_eq!(h.tokens, path);
        assert!((h.log_prob - lp).abs() < 1e-12);
        assert_eq!(path, vec![2]);
    }

    fn greedy(f: &dyn Fn(&[TokenId]) -> Vec<f64>, max_new: usize) -> Vec<TokenId> {
        let mut gen = Vec::new();
        for _ in 0..max_new {
            let next = f(&gen);
            let mut arg = 0;
            for (i, &v) in next.iter().enumerate() {
                if v > next[arg] {
                    arg = i;
                }
            }
            if arg == 0 {
                break;
            }
            gen.push(arg as TokenId);
        }
        gen
    }

    #[test]
    fn beam_one_is_greedy() {
        let cfg = BeamConfig {
            beam_size: 1,
            max_new_tokens: 3,
            length_penalty: 1.0,
        };
        let h = beam_search(&Table(garden_path), &[], &cfg, 0).unwrap();
        assert_eq!(h.tokens, greedy(&garden_path, 3));
        assert_eq!(h.tokens, vec![1, 1]);
    }

    #[test]
    fn ties_break_by_token_id() {
        let flat = |gen: &[TokenId]| if gen.is_empty() { ln([0.2, 0.4, 0.4]) } else { ln([1.0, 1e-9, 1e-9]) };
        let cfg = BeamConfig {
            beam_size: 1,
            max_new_tokens: 4,
            length_penalty: 1.0,
        };
        assert_eq!(beam_search(&Table(flat), &[], &cfg, 0).unwrap().tokens, vec![1]);
    }

    #[test]
    fn immediate_eos_is_empty_and_zero_beam_is_error() {
        let stop = |_: &[TokenId]| ln([0.98, 0.01, 0.01]);
        let h = beam_search(&Table(stop), &[], &BeamConfig::default(), 0).unwrap();
        assert!(h.tokens.is_empty() && h.finished);
        let cfg = BeamConfig {
            beam_size: 0,
            ..Default::default()
        };
        assert!(matches!(beam_search(&Table(stop), &[], &cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn max_new_tokens_truncates() {
        let never = |_: &[TokenId]| ln([0.01, 0.98, 0.01]);
        let cfg = BeamConfig {
            beam_size: 1,
            max_new_tokens: 4,
            length_penalty: 1.0,
        };
        let h = beam_search(&Table(never), &[], &cfg, 0).unwrap();
        assert_eq!(h.tokens, vec![1; 4]);
        assert!(!h.finished);
    }
}
