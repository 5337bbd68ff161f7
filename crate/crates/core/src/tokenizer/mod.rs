//! Byte-level BPE tokenizer with language-tag special tokens.
//!
//! Ids are laid out as: special tokens first (in declaration order), then the
//! 256 single bytes, then one id per distinct token created by a merge.

mod io;
mod metrics;
mod pretokenize;
mod train;

use std::borrow::Cow;
use std::collections::HashMap;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use metrics::{fertility, parity, token_types, vocabulary_overlap, word_types, TokenizerMetrics};
pub use pretokenize::{bytes_to_printable, pretokenize, printable_to_bytes};
pub use train::{train_bpe, BpeTrainerConfig};

pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const MASK: &str = "<mask>";

/// The nine language codes of the reference vocabulary, in tag order.
pub const DEFAULT_LANGUAGES: [&str; 9] = [
    "deu_Latn", "eng_Latn", "eus_Latn", "fra_Latn", "glg_Latn", "ita_Latn", "por_Latn",
    "spa_Latn", "cat_Latn",
];

/// `cat_Latn` -> `[cat_Latn]`.
pub fn language_tag(lang: &str) -> String {
    format!("[{lang}]")
}

/// Normalizer settings recorded alongside the merges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizerFlags {
    pub nfkd: bool,
    pub lowercase: bool,
    pub add_prefix_space: bool,
}

impl Default for NormalizerFlags {
    fn default() -> Self {
        Self {
            nfkd: true,
            lowercase: false,
            add_prefix_space: false,
        }
    }
}

/// A trained vocabulary. Immutable once built.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    specials: Vec<String>,
    merges: Vec<(TokenId, TokenId)>,
    merge_ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
    by_bytes: HashMap<Vec<u8>, TokenId>,
    special_ids: HashMap<String, TokenId>,
    special_re: Option<Regex>,
    flags: NormalizerFlags,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.specials == other.specials
            && self.merges == other.merges
            && self.flags == other.flags
    }
}

impl Vocabulary {
    /// Rebuild a vocabulary from its special tokens and ordered merge list.
    pub fn from_parts(
        specials: Vec<String>,
        merges: Vec<(Vec<u8>, Vec<u8>)>,
        flags: NormalizerFlags,
    ) -> Result<Self> {
        let mut special_ids = HashMap::new();
        for (i, s) in specials.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::config("empty special token"));
            }
            if special_ids.insert(s.clone(), i as TokenId).is_some() {
                return Err(Error::config(format!("duplicate special token {s}")));
            }
        }
        let mut tokens: Vec<Vec<u8>> = specials.iter().map(|s| s.as_bytes().to_vec()).collect();
        let mut by_bytes = HashMap::new();
        for b in 0..=255u8 {
            by_bytes.insert(vec![b], tokens.len() as TokenId);
            tokens.push(vec![b]);
        }
        let mut merge_ids = Vec::with_capacity(merges.len());
        let mut merge_ranks = HashMap::new();
        for (rank, (left, right)) in merges.iter().enumerate() {
            let lookup = |piece: &[u8]| {
                by_bytes.get(piece).copied().ok_or_else(|| {
                    Error::format(
                        "vocabulary",
                        format!("merge {rank} references unknown token {:?}", bytes_to_printable(piece)),
                    )
                })
            };
            let l = lookup(left)?;
            let r = lookup(right)?;
            let mut joined = left.clone();
            joined.extend_from_slice(right);
            let id = match by_bytes.get(&joined) {
                Some(&id) => id,
                None => {
                    let id = tokens.len() as TokenId;
                    by_bytes.insert(joined.clone(), id);
                    tokens.push(joined);
                    id
                }
            };
            merge_ids.push((l, r));
            merge_ranks.entry((l, r)).or_insert((rank, id));
        }
        let special_re = if specials.is_empty() {
            None
        } else {
            let mut sorted: Vec<&String> = specials.iter().collect();
            sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            let alt: Vec<String> = sorted.iter().map(|s| regex::escape(s)).collect();
            Some(Regex::new(&alt.join("|")).map_err(|e| Error::config(e.to_string()))?)
        };
        Ok(Self {
            tokens,
            specials,
            merges: merge_ids,
            merge_ranks,
            by_bytes,
            special_ids,
            special_re,
            flags,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn flags(&self) -> NormalizerFlags {
        self.flags
    }

    pub fn num_specials(&self) -> usize {
        self.specials.len()
    }

    /// Special tokens with their ids.
    pub fn special_tokens(&self) -> impl Iterator<Item = (&str, TokenId)> + '_ {
        self.specials
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as TokenId))
    }

    /// Merge rules as `(left, right)` id pairs, in application order.
    pub fn merges(&self) -> &[(TokenId, TokenId)] {
        &self.merges
    }

    pub fn special_id(&self, token: &str) -> Option<TokenId> {
        self.special_ids.get(token).copied()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < self.specials.len()
    }

    fn required_special(&self, token: &str) -> TokenId {
        self.special_id(token)
            .unwrap_or_else(|| panic!("vocabulary always carries {token}"))
    }

    pub fn bos_id(&self) -> TokenId {
        self.required_special(BOS)
    }

    pub fn eos_id(&self) -> TokenId {
        self.required_special(EOS)
    }

    pub fn pad_id(&self) -> TokenId {
        self.required_special(PAD)
    }

    pub fn mask_id(&self) -> TokenId {
        self.required_special(MASK)
    }

    /// Id of the `[lang]` tag, or a configuration error if it is not a special token.
    pub fn language_id(&self, lang: &str) -> Result<TokenId> {
        let tag = language_tag(lang);
        self.special_id(&tag)
            .ok_or_else(|| Error::config(format!("unknown language tag {tag}")))
    }

    /// Language codes that have a tag in this vocabulary, in id order.
    pub fn languages(&self) -> Vec<String> {
        self.specials
            .iter()
            .filter_map(|s| s.strip_prefix('[').and_then(|s| s.strip_suffix(']')))
            .map(str::to_owned)
            .collect()
    }

    /// Token-string view: specials render literally, other tokens through the
    /// printable byte alphabet.
    pub fn id_to_token(&self, id: TokenId) -> Option<String> {
        let bytes = self.tokens.get(id as usize)?;
        if self.is_special(id) {
            Some(String::from_utf8_lossy(bytes).into_owned())
        } else {
            Some(bytes_to_printable(bytes))
        }
    }

    pub fn token_to_id(&self, token: &str) -> Option<TokenId> {
        if let Some(id) = self.special_id(token) {
            return Some(id);
        }
        printable_to_bytes(token).and_then(|b| self.by_bytes.get(&b).copied())
    }

    pub(crate) fn token_bytes(&self, id: TokenId) -> &[u8] {
        &self.tokens[id as usize]
    }

    /// Apply the recorded normalizers (NFKD, lowercasing). `encode` itself is
    /// lossless; pipelines call this first.
    pub fn normalize<'a>(&self, text: &'a str) -> Cow<'a, str> {
        let mut out = Cow::Borrowed(text);
        if self.flags.nfkd && !text.is_ascii() {
            out = Cow::Owned(out.nfkd().collect());
        }
        if self.flags.lowercase {
            out = Cow::Owned(out.to_lowercase());
        }
        if self.flags.add_prefix_space && !out.starts_with(' ') {
            out = Cow::Owned(format!(" {out}"));
        }
        out
    }

    /// Normalize then encode.
    pub fn encode_normalized(&self, text: &str) -> Vec<TokenId> {
        self.encode(&self.normalize(text))
    }

    /// Byte-level BPE encoding. Special-token strings are matched first and
    /// emitted as their single id; everything else is pre-tokenized and merged
    /// greedily in learned merge order.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut last = 0;
        if let Some(re) = &self.special_re {
            for m in re.find_iter(text) {
                self.encode_plain(&text[last..m.start()], &mut out);
                out.push(self.special_ids[m.as_str()]);
                last = m.end();
            }
        }
        self.encode_plain(&text[last..], &mut out);
        out
    }

    fn encode_plain(&self, text: &str, out: &mut Vec<TokenId>) {
        for piece in pretokenize(text) {
            self.encode_piece(piece.as_bytes(), out);
        }
    }

    /// Encode raw bytes with no pre-tokenization or special matching; used for
    /// arbitrary (possibly non-UTF-8) byte strings.
    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::new();
        self.encode_piece(bytes, &mut out);
        out
    }

    fn encode_piece(&self, bytes: &[u8], out: &mut Vec<TokenId>) {
        let base = self.specials.len() as TokenId;
        let mut symbols: Vec<TokenId> = bytes.iter().map(|&b| base + b as TokenId).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0], w[1])).map(|&(rank, _)| (rank, (w[0], w[1]))))
                .min();
            let Some((_, pair)) = best else { break };
            let new_id = self.merge_ranks[&pair].1;
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = merged;
        }
        out.extend(symbols);
    }

    /// Concatenated bytes of `ids`; special tokens contribute their literal text.
    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let bytes = self.tokens.get(id as usize).ok_or_else(|| {
                Error::input(format!("token id {id} out of range (vocab size {})", self.vocab_size()))
            })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Decode to text. Byte sequences that are not valid UTF-8 (possible for
    /// arbitrary id lists) are replaced with U+FFFD.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let bytes = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    /// Decode model output for display: drops special tokens and recomposes
    /// NFKD-normalized text.
    pub fn decode_text(&self, ids: &[TokenId]) -> Result<String> {
        let plain: Vec<TokenId> = ids.iter().copied().filter(|&id| !self.is_special(id)).collect();
        let text = self.decode(&plain)?;
        Ok(if self.flags.nfkd && !text.is_ascii() {
            text.nfc().collect()
        } else {
            text
        })
    }
}

/// The default special-token list: BOS, EOS, pad, mask, then one tag per language.
pub fn default_specials<S: AsRef<str>>(languages: &[S]) -> Vec<String> {
    let mut specials: Vec<String> = [BOS, EOS, PAD, MASK].iter().map(|s| s.to_string()).collect();
    specials.extend(languages.iter().map(|l| language_tag(l.as_ref())));
    specials
}
