use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::Vocabulary;
use crate::error::{Error, Result};

fn token_total<S: AsRef<str>>(vocab: &Vocabulary, sentences: &[S]) -> usize {
    sentences
        .iter()
        .map(|s| vocab.encode_normalized(s.as_ref()).len())
        .sum()
}

/// Total tokens over total whitespace-delimited words.
pub fn fertility<S: AsRef<str>>(vocab: &Vocabulary, sentences: &[S]) -> Result<f64> {
    let words: usize = sentences
        .iter()
        .map(|s| s.as_ref().split_whitespace().count())
        .sum();
    if words == 0 {
        return Err(Error::input("fertility needs at least one word"));
    }
    Ok(token_total(vocab, sentences) as f64 / words as f64)
}

/// `|T(s_a)| / |T(s_b)|` over aligned sentence sets.
pub fn parity<S: AsRef<str>>(vocab: &Vocabulary, s_a: &[S], s_b: &[S]) -> Result<f64> {
    if s_a.is_empty() || s_b.is_empty() {
        return Err(Error::input("parity needs nonempty sentence sets"));
    }
    if s_a.len() != s_b.len() {
        return Err(Error::input(format!(
            "parity needs aligned sets, got {} vs {} sentences",
            s_a.len(),
            s_b.len()
        )));
    }
    let b = token_total(vocab, s_b);
    if b == 0 {
        return Err(Error::input("second sentence set produced zero tokens"));
    }
    Ok(token_total(vocab, s_a) as f64 / b as f64)
}

/// `|src ∩ tgt| / |tgt|`.
pub fn vocabulary_overlap(words_src: &BTreeSet<String>, words_tgt: &BTreeSet<String>) -> Result<f64> {
    if words_tgt.is_empty() {
        return Err(Error::input("target word set is empty"));
    }
    let shared = words_tgt.intersection(words_src).count();
    Ok(shared as f64 / words_tgt.len() as f64)
}

/// Whitespace-delimited word types.
pub fn word_types<S: AsRef<str>>(sentences: &[S]) -> BTreeSet<String> {
    sentences
        .iter()
        .flat_map(|s| s.as_ref().split_whitespace().map(str::to_owned))
        .collect()
}

/// Subword-token types, rendered as token strings.
pub fn token_types<S: AsRef<str>>(vocab: &Vocabulary, sentences: &[S]) -> BTreeSet<String> {
    sentences
        .iter()
        .flat_map(|s| vocab.encode_normalized(s.as_ref()))
        .filter_map(|id| vocab.id_to_token(id))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenizerMetrics {
    /// Mean of the per-language fertilities.
    pub fertility: f64,
    pub per_language: BTreeMap<String, f64>,
    /// Parity of every language against `reference`.
    pub parity: BTreeMap<String, f64>,
    pub reference: String,
}

impl TokenizerMetrics {
    /// `aligned` maps language to sentence list; all lists must be aligned.
    pub fn compute(
        vocab: &Vocabulary,
        aligned: &BTreeMap<String, Vec<String>>,
        reference: &str,
    ) -> Result<Self> {
        let reference_set = aligned
            .get(reference)
            .ok_or_else(|| Error::input(format!("no sentences for reference language {reference}")))?;
        let mut per_language = BTreeMap::new();
        let mut parity_map = BTreeMap::new();
        for (lang, sentences) in aligned {
            per_language.insert(lang.clone(), fertility(vocab, sentences)?);
            parity_map.insert(lang.clone(), parity(vocab, sentences, reference_set)?);
        }
        if per_language.is_empty() {
            return Err(Error::input("no languages to measure"));
        }
        let fertility = per_language.values().sum::<f64>() / per_language.len() as f64;
        Ok(Self {
            fertility,
            per_language,
            parity: parity_map,
            reference: reference.to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{default_specials, NormalizerFlags, DEFAULT_LANGUAGES};

    fn bytes_only() -> Vocabulary {
        Vocabulary::from_parts(default_specials(&DEFAULT_LANGUAGES), vec![], NormalizerFlags::default())
            .unwrap()
    }

    fn with_merges(m: &[(&str, &str)]) -> Vocabulary {
        Vocabulary::from_parts(
            default_specials(&DEFAULT_LANGUAGES),
            m.iter().map(|(a, b)| (a.as_bytes().to_vec(), b.as_bytes().to_vec())).collect(),
            NormalizerFlags::default(),
        )
        .unwrap()
    }

    #[test]
    fn fertility_hand_case() {
        // "a b" -> "a", " b" -> bytes a, space, b = 3 tokens over 2 words.
        let v = bytes_only();
        assert_eq!(fertility(&v, &["a b"]).unwrap(), 1.5);
        // One token per word once " b" is merged.
        let v = with_merges(&[(" ", "b")]);
        assert_eq!(fertility(&v, &["a b"]).unwrap(), 1.0);
    }

    #[test]
    fn fertility_reported_corpus_size() {
        // Average fertility times the reported word count gives the token count.
        let tokens = 1.77 * 30_890_509_534.0_f64;
        assert!((tokens / 1e9 - 54.7).abs() < 0.05);
    }

    #[test]
    fn fertility_needs_words() {
        assert!(matches!(fertility(&bytes_only(), &["   "]), Err(Error::Input(_))));
    }

    #[test]
    fn parity_cases() {
        let v = bytes_only();
        let a = ["abc", "de"];
        assert_eq!(parity(&v, &a, &a).unwrap(), 1.0);
        // 30 vs 20 byte tokens.
        let long = ["x".repeat(15), "y".repeat(15)];
        let short = ["x".repeat(10), "y".repeat(10)];
        assert_eq!(parity(&v, &long, &short).unwrap(), 1.5);
        let ab = parity(&v, &long, &short).unwrap() * parity(&v, &short, &long).unwrap();
        assert!((ab - 1.0).abs() < 1e-15);
        assert!(parity(&v, &["a"], &[""]).is_err());
        assert!(parity(&v, &["a", "b"], &["a"]).is_err());
    }

    #[test]
    fn overlap_cases() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(vocabulary_overlap(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(vocabulary_overlap(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        let o = vocabulary_overlap(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])).unwrap();
        assert!((o - 2.0 / 3.0).abs() < 1e-15);
        assert!(vocabulary_overlap(&set(&["a"]), &set(&[])).is_err());
    }

    #[test]
    fn metrics_bundle() {
        let v = bytes_only();
        let mut aligned = BTreeMap::new();
        aligned.insert("cat_Latn".to_string(), vec!["ab cd".to_string()]);
        aligned.insert("spa_Latn".to_string(), vec!["ab".to_string()]);
        let m = TokenizerMetrics::compute(&v, &aligned, "cat_Latn").unwrap();
        assert_eq!(m.parity["cat_Latn"], 1.0);
        assert_eq!(m.per_language["spa_Latn"], 2.0);
    }
}
