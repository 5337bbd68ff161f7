use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{default_specials, pretokenize, NormalizerFlags, TokenId, Vocabulary, DEFAULT_LANGUAGES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpeTrainerConfig {
    /// Total entries including specials and the 256 byte tokens.
    pub vocab_size: usize,
    /// Language codes; each gets a `[code]` special token.
    pub languages: Vec<String>,
    /// Integer duplication factor per language (missing = 1).
    pub oversample: BTreeMap<String, u32>,
    /// Reservoir-sample at most this many sentences per language.
    pub max_sentences_per_language: Option<usize>,
    pub nfkd: bool,
    pub lowercase: bool,
    pub add_prefix_space: bool,
    /// Stop early, with a smaller vocabulary, when no pair is left to merge.
    pub allow_smaller: bool,
    pub seed: u64,
}

impl Default for BpeTrainerConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32_000,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            oversample: BTreeMap::new(),
            max_sentences_per_language: None,
            nfkd: true,
            lowercase: false,
            add_prefix_space: false,
            allow_smaller: false,
            seed: 0,
        }
    }
}

impl BpeTrainerConfig {
    pub fn flags(&self) -> NormalizerFlags {
        NormalizerFlags {
            nfkd: self.nfkd,
            lowercase: self.lowercase,
            add_prefix_space: self.add_prefix_space,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Vec<u8>,
    right: Vec<u8>,
    pair: (TokenId, TokenId),
}

impl Ord for Candidate {
    // Max-heap on count; among equal counts the lexicographically smaller
    // (left, right) byte pair wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Train a byte-level BPE vocabulary of exactly `cfg.vocab_size` entries.
///
/// `corpus` yields `(language, sentence)` pairs. Deterministic for a fixed
/// seed and input order.
pub fn train_bpe<I, L, S>(corpus: I, cfg: &BpeTrainerConfig) -> Result<Vocabulary>
where
    I: IntoIterator<Item = (L, S)>,
    L: AsRef<str>,
    S: AsRef<str>,
{
    let specials = default_specials(&cfg.languages);
    let base = specials.len() + 256;
    if cfg.vocab_size <= base {
        return Err(Error::config(format!(
            "vocab_size {} must exceed {} specials + 256 byte tokens",
            cfg.vocab_size,
            specials.len()
        )));
    }
    let flags = cfg.flags();
    // Normalization needs a vocabulary; an empty-merge one carries the flags.
    let normalizer = Vocabulary::from_parts(specials.clone(), Vec::new(), flags)?;

    let sample = sample_corpus(corpus, cfg);
    if sample.values().all(Vec::is_empty) {
        return Err(Error::input("tokenizer corpus sample is empty"));
    }

    let special_re = {
        let alt: Vec<String> = specials.iter().map(|s| regex::escape(s)).collect();
        Regex::new(&alt.join("|")).map_err(|e| Error::config(e.to_string()))?
    };

    let mut word_counts: HashMap<Vec<u8>, u64> = HashMap::new();
    for (lang, sentences) in &sample {
        let mult = u64::from(cfg.oversample.get(lang).copied().unwrap_or(1));
        if mult == 0 {
            continue;
        }
        for sentence in sentences {
            let text = normalizer.normalize(sentence);
            for chunk in special_re.split(&text) {
                for piece in pretokenize(chunk) {
                    *word_counts.entry(piece.as_bytes().to_vec()).or_insert(0) += mult;
                }
            }
        }
    }
    let mut words: Vec<(Vec<u8>, u64)> = word_counts.into_iter().collect();
    words.sort();

    let merges = learn_merges(&words, specials.len(), cfg.vocab_size - base, cfg.allow_smaller)?;
    Vocabulary::from_parts(specials, merges, flags)
}

fn sample_corpus<I, L, S>(corpus: I, cfg: &BpeTrainerConfig) -> BTreeMap<String, Vec<String>>
where
    I: IntoIterator<Item = (L, S)>,
    L: AsRef<str>,
    S: AsRef<str>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (lang, sentence) in corpus {
        let lang = lang.as_ref();
        let bucket = kept.entry(lang.to_owned()).or_default();
        let n = seen.entry(lang.to_owned()).or_insert(0);
        *n += 1;
        match cfg.max_sentences_per_language {
            Some(k) if bucket.len() >= k => {
                let slot = rng.gen_range(0..*n);
                if slot < k {
                    bucket[slot] = sentence.as_ref().to_owned();
                }
            }
            _ => bucket.push(sentence.as_ref().to_owned()),
        }
    }
    kept
}

fn learn_merges(
    words: &[(Vec<u8>, u64)],
    num_specials: usize,
    wanted_new_tokens: usize,
    allow_short: bool,
) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
    let mut token_bytes: Vec<Vec<u8>> = vec![Vec::new(); num_specials];
    let mut by_bytes: HashMap<Vec<u8>, TokenId> = HashMap::new();
    for b in 0..=255u8 {
        by_bytes.insert(vec![b], token_bytes.len() as TokenId);
        token_bytes.push(vec![b]);
    }
    let mut symbols: Vec<Vec<TokenId>> = words
        .iter()
        .map(|(w, _)| w.iter().map(|&b| (num_specials + b as usize) as TokenId).collect())
        .collect();
    let counts: Vec<u64> = words.iter().map(|(_, c)| *c).collect();

    let mut pair_counts: HashMap<(TokenId, TokenId), u64> = HashMap::new();
    let mut occurs: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (wi, syms) in symbols.iter().enumerate() {
        for w in syms.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_insert(0) += counts[wi];
            occurs.entry((w[0], w[1])).or_default().insert(wi);
        }
    }
    let candidate = |pair: (TokenId, TokenId), count: u64, tb: &[Vec<u8>]| Candidate {
        count,
        left: tb[pair.0 as usize].clone(),
        right: tb[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&p, &c)| candidate(p, c, &token_bytes))
        .collect();

    let mut merges = Vec::new();
    let mut created = 0usize;
    while created < wanted_new_tokens {
        let Some(top) = heap.pop() else {
            if allow_short {
                break;
            }
            return Err(Error::config(format!(
                "corpus exhausted after {created} new tokens; requested {wanted_new_tokens}"
            )));
        };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(candidate(top.pair, current, &token_bytes));
            }
            continue;
        }
        let (l, r) = top.pair;
        let mut joined = token_bytes[l as usize].clone();
        joined.extend_from_slice(&token_bytes[r as usize]);
        let new_id = match by_bytes.get(&joined) {
            Some(&id) => id,
            None => {
                let id = token_bytes.len() as TokenId;
                by_bytes.insert(joined.clone(), id);
                token_bytes.push(joined);
                created += 1;
                id
            }
        };
        merges.push((top.left, top.right));

        let mut affected: Vec<usize> = occurs.remove(&top.pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<(TokenId, TokenId)> = HashSet::new();
        for wi in affected {
            let c = counts[wi];
            let old = &symbols[wi];
            for w in old.windows(2) {
                let p = (w[0], w[1]);
                if let Some(v) = pair_counts.get_mut(&p) {
                    *v -= c;
                }
                touched.insert(p);
            }
            let mut merged = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && old[i] == l && old[i + 1] == r {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(old[i]);
                    i += 1;
                }
            }
            for w in merged.windows(2) {
                let p = (w[0], w[1]);
                *pair_counts.entry(p).or_insert(0) += c;
                occurs.entry(p).or_default().insert(wi);
                touched.insert(p);
            }
            symbols[wi] = merged;
        }
        pair_counts.remove(&top.pair);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            match pair_counts.get(&p).copied() {
                Some(0) => {
                    pair_counts.remove(&p);
                }
                Some(c) => heap.push(candidate(p, c, &token_bytes)),
                None => {}
            }
        }
    }
    Ok(merges)
}
