//! A deterministic toy translation task: digit strings spelled out word by
//! word in small invented languages.
//!
//! The codes use the ISO 639 private-use range so they never collide with a
//! real language tag.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ParallelExample;

pub const PIVOT: &str = "qpv_Latn";
pub const LANG_A: &str = "qaa_Latn";
pub const LANG_B: &str = "qbb_Latn";

/// Ten digit words of one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitLanguage {
    pub code: String,
    pub words: [String; 10],
}

impl DigitLanguage {
    pub fn new(code: &str, words: [&str; 10]) -> Self {
        Self {
            code: code.into(),
            words: words.map(String::from),
        }
    }

    pub fn render(&self, digits: &[u8]) -> String {
        let words: Vec<&str> = digits.iter().map(|&d| self.words[d as usize].as_str()).collect();
        words.join(" ")
    }
}

/// Pivot, A and B, in that order.
pub fn default_languages() -> Vec<DigitLanguage> {
    vec![
        DigitLanguage::new(PIVOT, ["nul", "ein", "dva", "tri", "kat", "pen", "hex", "sep", "okt", "nov"]),
        DigitLanguage::new(LANG_A, ["zaro", "ulu", "bita", "kimo", "feru", "gaso", "lupa", "moki", "neva", "ropi"]),
        DigitLanguage::new(LANG_B, ["xen", "yom", "wik", "qat", "vel", "jor", "dus", "ham", "tib", "sof"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitTask {
    pub languages: Vec<DigitLanguage>,
    pub min_digits: usize,
    pub max_digits: usize,
}

impl Default for DigitTask {
    fn default() -> Self {
        Self {
            languages: default_languages(),
            min_digits: 2,
            max_digits: 7,
        }
    }
}

impl DigitTask {
    pub fn language(&self, code: &str) -> Option<&DigitLanguage> {
        self.languages.iter().find(|l| l.code == code)
    }

    pub fn codes(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.code.clone()).collect()
    }

    /// `n` distinct digit strings not present in `exclude`.
    pub fn sample_numbers(&self, n: usize, seed: u64, exclude: &HashSet<Vec<u8>>) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        let capacity: usize = (self.min_digits..=self.max_digits).map(|k| 10usize.saturating_pow(k as u32)).sum();
        assert!(n + exclude.len() <= capacity, "not enough distinct digit strings");
        while out.len() < n {
            let len = rng.gen_range(self.min_digits..=self.max_digits);
            let digits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..10)).collect();
            if !exclude.contains(&digits) && seen.insert(digits.clone()) {
                out.push(digits);
            }
        }
        out
    }

    /// One example per number for the `src -> tgt` direction.
    pub fn pairs(&self, numbers: &[Vec<u8>], src: &str, tgt: &str) -> Vec<ParallelExample> {
        let s = self.language(src).expect("source language in task");
        let t = self.language(tgt).expect("target language in task");
        numbers
            .iter()
            .map(|d| ParallelExample::new(src, tgt, &s.render(d), &t.render(d)).expect("valid pair"))
            .collect()
    }

    /// Every sentence of every language, for tokenizer training.
    pub fn monolingual(&self, numbers: &[Vec<u8>]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for lang in &self.languages {
            for d in numbers {
                out.push((lang.code.clone(), lang.render(d)));
            }
        }
        out
    }
}

/// Random interleave of several example lists, deterministic in `seed`.
pub fn shuffle_examples(mut examples: Vec<ParallelExample>, seed: u64) -> Vec<ParallelExample> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples.shuffle(&mut rng);
    examples
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_word_per_digit() {
        let t = DigitTask::default();
        assert_eq!(t.language(PIVOT).unwrap().render(&[1, 0, 9]), "ein nul nov");
    }

    #[test]
    fn word_sets_are_disjoint() {
        let langs = default_languages();
        let mut all = HashSet::new();
        for l in &langs {
            for w in &l.words {
                assert!(all.insert(w.clone()), "{w} repeated");
            }
        }
    }

    #[test]
    fn samples_are_distinct_and_respect_exclusions() {
        let t = DigitTask::default();
        let held: HashSet<Vec<u8>> = t.sample_numbers(200, 1, &HashSet::new()).into_iter().collect();
        let train = t.sample_numbers(2000, 2, &held);
        assert_eq!(train.iter().collect::<HashSet<_>>().len(), 2000);
        assert!(train.iter().all(|d| !held.contains(d)));
        assert_eq!(t.sample_numbers(50, 7, &held), t.sample_numbers(50, 7, &held));
    }
}
