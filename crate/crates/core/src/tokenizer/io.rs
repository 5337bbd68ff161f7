//! Versioned text format:
//!
//! ```text
//! #pivotlm-vocab 1
//! vocab_size 271
//! nfkd_normalizer true
//! lowercase_normalizer false
//! add_prefix_space false
//! specials 13
//! <s>
//! ...
//! merges 2
//! a b
//! Ġ ab
//! ```
//!
//! Merge sides use the printable byte alphabet, so a single space separates them.

use std::fmt::Write as _;
use std::path::Path;

use super::{bytes_to_printable, printable_to_bytes, NormalizerFlags, Vocabulary};
use crate::error::{Error, Result};

const MAGIC: &str = "#pivotlm-vocab";
const VERSION: u32 = 1;

impl Vocabulary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "vocab_size {}", self.vocab_size());
        let _ = writeln!(s, "nfkd_normalizer {}", self.flags.nfkd);
        let _ = writeln!(s, "lowercase_normalizer {}", self.flags.lowercase);
        let _ = writeln!(s, "add_prefix_space {}", self.flags.add_prefix_space);
        let _ = writeln!(s, "specials {}", self.specials.len());
        for sp in &self.specials {
            let _ = writeln!(s, "{sp}");
        }
        let _ = writeln!(s, "merges {}", self.merges.len());
        for &(l, r) in &self.merges {
            let _ = writeln!(
                s,
                "{} {}",
                bytes_to_printable(self.token_bytes(l)),
                bytes_to_printable(self.token_bytes(r))
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("vocabulary", detail);
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));

        let header = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad(format!("bad magic line {header:?}")))?;
        if version != VERSION.to_string() {
            return Err(bad(format!("unsupported version {version}")));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected `{key} <value>`, got {line:?}")))
        };
        let parse_bool = |v: String| -> Result<bool> {
            v.parse().map_err(|_| bad(format!("not a boolean: {v}")))
        };
        let parse_usize = |v: String| -> Result<usize> {
            v.parse().map_err(|_| bad(format!("not a count: {v}")))
        };
        let vocab_size = parse_usize(field(next("vocab_size")?, "vocab_size")?)?;
        let flags = NormalizerFlags {
            nfkd: parse_bool(field(next("nfkd")?, "nfkd_normalizer")?)?,
            lowercase: parse_bool(field(next("lowercase")?, "lowercase_normalizer")?)?,
            add_prefix_space: parse_bool(field(next("prefix")?, "add_prefix_space")?)?,
        };
        let n_specials = parse_usize(field(next("specials")?, "specials")?)?;
        let mut specials = Vec::with_capacity(n_specials);
        for _ in 0..n_specials {
            specials.push(next("special token")?.to_owned());
        }
        let n_merges = parse_usize(field(next("merges")?, "merges")?)?;
        let mut merges = Vec::with_capacity(n_merges);
        for i in 0..n_merges {
            let line = next("merge rule")?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("merge {i}: expected two tokens")))?;
            let decode = |t: &str| {
                printable_to_bytes(t).ok_or_else(|| bad(format!("merge {i}: bad token {t:?}")))
            };
            merges.push((decode(l)?, decode(r)?));
        }
        let vocab = Vocabulary::from_parts(specials, merges, flags)?;
        if vocab.vocab_size() != vocab_size {
            return Err(bad(format!(
                "header says vocab_size {vocab_size}, merges rebuild {}",
                vocab.vocab_size()
            )));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use crate::tokenizer::{train_bpe, BpeTrainerConfig};

    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = BpeTrainerConfig {
            vocab_size: 13 + 256 + 6,
            ..Default::default()
        };
        let v = train_bpe([("cat_Latn", "hola hola què tal"), ("spa_Latn", "hola qué tal")], &cfg).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("#pivotlm-vocab 1\nvocab_size 275\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(Vocabulary::from_text("nope").is_err());
        assert!(Vocabulary::from_text("#pivotlm-vocab 9\n").is_err());
    }
}
