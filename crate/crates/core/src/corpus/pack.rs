use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{FormattedPrompt, Regions};
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackConfig {
    pub context_len: usize,
    /// Prompts longer than this (or than `context_len`) are dropped.
    pub max_prompt_len: Option<usize>,
    /// Restrict attention to each prompt's own tokens.
    pub block_diagonal: bool,
    /// Count only target-sentence and EOS positions in the loss.
    pub target_only_loss: bool,
}

impl Default for PackConfig {
    fn default() -> Self {
        Self {
            context_len: 256,
            max_prompt_len: None,
            block_diagonal: false,
            target_only_loss: false,
        }
    }
}

/// Where a prompt landed inside a packed sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedPrompt {
    pub offset: usize,
    /// Regions relative to the prompt start; add `offset` for sequence indices.
    pub regions: Regions,
    pub direction: (String, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedSequence {
    pub ids: Vec<TokenId>,
    /// `loss_mask[t]` says whether token `t` is a prediction target.
    pub loss_mask: Vec<bool>,
    /// Prompt index per position (pads continue the last segment). Only
    /// meaningful to attention when packed with `block_diagonal`.
    pub segments: Vec<u32>,
    pub block_diagonal: bool,
    pub prompts: Vec<PackedPrompt>,
}

impl PackedSequence {
    /// Next-token targets for training: position `t` predicts `ids[t + 1]`
    /// when that token is in the loss mask.
    pub fn targets(&self) -> Vec<Option<TokenId>> {
        let n = self.ids.len();
        (0..n)
            .map(|t| (t + 1 < n && self.loss_mask[t + 1]).then(|| self.ids[t + 1]))
            .collect()
    }

    pub fn attention_segments(&self) -> Option<&[u32]> {
        self.block_diagonal.then_some(&self.segments[..])
    }

    pub fn non_pad_tokens(&self) -> usize {
        self.prompts.iter().map(|p| p.regions.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PackStats {
    pub accepted: usize,
    pub dropped: usize,
    pub sequences: usize,
    pub pad_tokens: usize,
}

/// Greedy first-come packing into `context_len` sequences, padded with `pad_id`.
pub fn pack_batches(
    prompts: impl IntoIterator<Item = FormattedPrompt>,
    cfg: &PackConfig,
    pad_id: TokenId,
) -> Result<(Vec<PackedSequence>, PackStats)> {
    if cfg.context_len < 2 {
        return Err(Error::config("context_len must be at least 2"));
    }
    if let Some(m) = cfg.max_prompt_len {
        if m > cfg.context_len {
            return Err(Error::config(format!(
                "context_len {} is shorter than max_prompt_len {m}",
                cfg.context_len
            )));
        }
    }
    let limit = cfg.max_prompt_len.unwrap_or(cfg.context_len);
    let mut stats = PackStats::default();
    let mut out = Vec::new();
    let mut current = open(cfg);

    for p in prompts {
        if p.len() > limit {
            stats.dropped += 1;
            continue;
        }
        if current.ids.len() + p.len() > cfg.context_len {
            out.push(close(current, cfg, pad_id, &mut stats));
            current = open(cfg);
        }
        let offset = current.ids.len();
        let seg = current.prompts.len() as u32;
        for (i, &id) in p.ids.iter().enumerate() {
            let counted = !cfg.target_only_loss || i >= p.regions.tgt_sentence.start;
            current.ids.push(id);
            current.loss_mask.push(counted);
            current.segments.push(seg);
        }
        current.prompts.push(PackedPrompt {
            offset,
            regions: p.regions,
            direction: (p.src_lang, p.tgt_lang),
        });
        stats.accepted += 1;
    }
    if !current.prompts.is_empty() {
        out.push(close(current, cfg, pad_id, &mut stats));
    }
    stats.sequences = out.len();
    Ok((out, stats))
}

fn open(cfg: &PackConfig) -> PackedSequence {
    PackedSequence {
        ids: Vec::with_capacity(cfg.context_len),
        loss_mask: Vec::with_capacity(cfg.context_len),
        segments: Vec::with_capacity(cfg.context_len),
        block_diagonal: cfg.block_diagonal,
        prompts: Vec::new(),
    }
}

fn close(mut s: PackedSequence, cfg: &PackConfig, pad_id: TokenId, stats: &mut PackStats) -> PackedSequence {
    let pads = cfg.context_len - s.ids.len();
    let seg = s.segments.last().copied().unwrap_or(0);
    s.ids.resize(cfg.context_len, pad_id);
    s.loss_mask.resize(cfg.context_len, false);
    s.segments.resize(cfg.context_len, seg);
    stats.pad_tokens += pads;
    s
}

/// Debug dump: one line per sequence, comma-separated ids.
pub fn packed_to_csv(seqs: &[PackedSequence]) -> String {
    let mut s = String::new();
    for seq in seqs {
        let row: Vec<String> = seq.ids.iter().map(|id| id.to_string()).collect();
        writeln!(s, "{}", row.join(",")).expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(len: usize, lang: &str) -> FormattedPrompt {
        assert!(len >= 5);
        let ids: Vec<TokenId> = (0..len as u32).map(|i| 100 + i).collect();
        FormattedPrompt {
            ids,
            regions: Regions {
                bos: 0..1,
                src_tag: 1..2,
                src_sentence: 2..3,
                tgt_tag: 3..4,
                tgt_sentence: 4..len - 1,
                eos: len - 1,
            },
            src_lang: lang.into(),
            tgt_lang: "pivot".into(),
        }
    }

    fn cfg(n: usize) -> PackConfig {
        PackConfig {
            context_len: n,
            ..Default::default()
        }
    }

    #[test]
    fn exact_fit_has_no_padding() {
        let (seqs, st) = pack_batches([prompt(5, "a"), prompt(5, "a"), prompt(6, "a")], &cfg(16), 0).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(st.pad_tokens, 0);
        assert!(seqs[0].loss_mask.iter().all(|&m| m));
    }

    #[test]
    fn single_prompt_pads_are_masked() {
        let (seqs, st) = pack_batches([prompt(10, "a")], &cfg(16), 2).unwrap();
        assert_eq!(st.pad_tokens, 6);
        assert_eq!(&seqs[0].ids[10..], &[2; 6]);
        assert_eq!(seqs[0].loss_mask.iter().filter(|&&m| !m).count(), 6);
    }

    #[test]
    fn long_prompt_is_dropped() {
        let (seqs, st) = pack_batches([prompt(20, "a"), prompt(6, "a")], &cfg(16), 0).unwrap();
        assert_eq!((st.dropped, st.accepted, seqs.len()), (1, 1, 1));
    }

    #[test]
    fn max_prompt_len_above_context_is_config_error() {
        let c = PackConfig {
            context_len: 8,
            max_prompt_len: Some(9),
            ..Default::default()
        };
        assert!(matches!(pack_batches([], &c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn prompts_never_straddle() {
        let (seqs, _) = pack_batches([prompt(9, "a"), prompt(9, "b"), prompt(9, "a")], &cfg(16), 0).unwrap();
        assert_eq!(seqs.len(), 3);
        for s in &seqs {
            assert_eq!(s.prompts.len(), 1);
            assert_eq!(s.prompts[0].offset, 0);
        }
    }

    #[test]
    fn target_only_mask_and_targets() {
        let c = PackConfig {
            target_only_loss: true,
            ..cfg(8)
        };
        let (seqs, _) = pack_batches([prompt(7, "a")], &c, 0).unwrap();
        let s = &seqs[0];
        assert_eq!(s.loss_mask, vec![false, false, false, false, true, true, true, false]);
        let t = s.targets();
        assert_eq!(t[3], Some(s.ids[4]));
        assert_eq!(t[2], None);
        assert_eq!(t[6], None);
        assert_eq!(t[7], None);
    }
}
