//! Parallel data ingestion, prompt rendering and sequence packing.
//!
//! A prompt is `<s> [src] source \n[tgt] target </s>`. Every region's token
//! range is recorded so the attention analyses can address it directly.

mod manifest;
mod pack;
pub mod synthetic;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Vocabulary};

pub use manifest::{load_manifest, parse_tsv_line, to_tsv, LoadedCorpus, Manifest, ManifestEntry};
pub use pack::{pack_batches, packed_to_csv, PackConfig, PackStats, PackedPrompt, PackedSequence};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelExample {
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_text: String,
    pub tgt_text: String,
}

impl ParallelExample {
    /// Trims both sides; rejects empty texts and identical languages.
    pub fn new(src_lang: &str, tgt_lang: &str, src_text: &str, tgt_text: &str) -> Result<Self> {
        if src_lang == tgt_lang {
            return Err(Error::input(format!("source and target language are both {src_lang}")));
        }
        let (s, t) = (src_text.trim(), tgt_text.trim());
        if s.is_empty() || t.is_empty() {
            return Err(Error::input("empty sentence in parallel example"));
        }
        Ok(Self {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            src_text: s.into(),
            tgt_text: t.into(),
        })
    }

    pub fn direction(&self) -> (&str, &str) {
        (&self.src_lang, &self.tgt_lang)
    }
}

/// The prompt parts whose coverage is analyzed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Bos,
    SrcTag,
    SrcSentence,
    TgtTag,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Bos, Region::SrcTag, Region::SrcSentence, Region::TgtTag];

    pub fn name(self) -> &'static str {
        match self {
            Region::Bos => "bos",
            Region::SrcTag => "src_tag",
            Region::SrcSentence => "src_sentence",
            Region::TgtTag => "tgt_tag",
        }
    }
}

/// Half-open token ranges of a formatted prompt, in prompt order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regions {
    pub bos: Range<usize>,
    pub src_tag: Range<usize>,
    pub src_sentence: Range<usize>,
    /// The newline token(s) plus the target language tag.
    pub tgt_tag: Range<usize>,
    pub tgt_sentence: Range<usize>,
    pub eos: usize,
}

impl Regions {
    pub fn get(&self, r: Region) -> Range<usize> {
        match r {
            Region::Bos => self.bos.clone(),
            Region::SrcTag => self.src_tag.clone(),
            Region::SrcSentence => self.src_sentence.clone(),
            Region::TgtTag => self.tgt_tag.clone(),
        }
    }

    /// Shifts every range by `offset` positions.
    pub fn shifted(&self, offset: usize) -> Self {
        let s = |r: &Range<usize>| r.start + offset..r.end + offset;
        Self {
            bos: s(&self.bos),
            src_tag: s(&self.src_tag),
            src_sentence: s(&self.src_sentence),
            tgt_tag: s(&self.tgt_tag),
            tgt_sentence: s(&self.tgt_sentence),
            eos: self.eos + offset,
        }
    }

    pub fn len(&self) -> usize {
        self.eos + 1 - self.bos.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormattedPrompt {
    pub ids: Vec<TokenId>,
    pub regions: Regions,
    pub src_lang: String,
    pub tgt_lang: String,
}

impl FormattedPrompt {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Everything up to and including the target tag: the decoding prefix.
    pub fn prefix(&self) -> &[TokenId] {
        &self.ids[..self.regions.tgt_tag.end]
    }

    pub fn target(&self) -> &[TokenId] {
        &self.ids[self.regions.tgt_sentence.clone()]
    }
}

/// Decoding prefix `<s> [src] text \n[tgt]`, returned with the region ranges
/// it contains (`tgt_sentence` empty, `eos` one past the end).
///
/// With `ablate_source_tag` the source tag position holds a second BOS.
pub fn format_source(
    vocab: &Vocabulary,
    src_lang: &str,
    tgt_lang: &str,
    src_text: &str,
    ablate_source_tag: bool,
) -> Result<(Vec<TokenId>, Regions)> {
    let src_tag = vocab.language_id(src_lang)?;
    let tgt_tag = vocab.language_id(tgt_lang)?;
    let bos = vocab.bos_id();
    let mut ids = vec![bos, if ablate_source_tag { bos } else { src_tag }];
    ids.extend(vocab.encode_normalized(src_text));
    let src_end = ids.len();
    ids.extend(vocab.encode("\n"));
    ids.push(tgt_tag);
    let end = ids.len();
    Ok((
        ids,
        Regions {
            bos: 0..1,
            src_tag: 1..2,
            src_sentence: 2..src_end,
            tgt_tag: src_end..end,
            tgt_sentence: end..end,
            eos: end,
        },
    ))
}

/// Renders one example in the training prompt format.
pub fn format_example(ex: &ParallelExample, vocab: &Vocabulary) -> Result<FormattedPrompt> {
    let (mut ids, mut regions) = format_source(vocab, &ex.src_lang, &ex.tgt_lang, &ex.src_text, false)?;
    ids.extend(vocab.encode_normalized(&ex.tgt_text));
    regions.tgt_sentence = regions.tgt_tag.end..ids.len();
    regions.eos = ids.len();
    ids.push(vocab.eos_id());
    Ok(FormattedPrompt {
        ids,
        regions,
        src_lang: ex.src_lang.clone(),
        tgt_lang: ex.tgt_lang.clone(),
    })
}
