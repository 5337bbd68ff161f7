use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ParallelExample;
use crate::error::{Error, Result};

/// One TSV file of `src<TAB>tgt` lines in a fixed direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub src_lang: String,
    pub tgt_lang: String,
    /// Integer repeat count for the file's lines.
    #[serde(default = "one")]
    pub weight: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, rename = "file")]
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::config(format!("manifest: {e}")))?;
        for f in &m.files {
            if f.src_lang == f.tgt_lang {
                return Err(Error::config(format!(
                    "manifest entry {} has identical source and target language {}",
                    f.path.display(),
                    f.src_lang
                )));
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Examples read from a manifest, with the count of lines that were skipped.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub examples: Vec<ParallelExample>,
    pub skipped_lines: usize,
}

/// Parses one TSV line; `None` for malformed lines.
pub fn parse_tsv_line(line: &str, src_lang: &str, tgt_lang: &str) -> Option<ParallelExample> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let (src, tgt) = line.split_once('\t')?;
    if tgt.contains('\t') {
        return None;
    }
    ParallelExample::new(src_lang, tgt_lang, src, tgt).ok()
}

/// Reads every file of the manifest in order, repeating each `weight` times.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = LoadedCorpus::default();
    for entry in &manifest.files {
        let file = base.join(&entry.path);
        let body = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut parsed = Vec::new();
        for line in body.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_tsv_line(line, &entry.src_lang, &entry.tgt_lang) {
                Some(ex) => parsed.push(ex),
                None => out.skipped_lines += 1,
            }
        }
        for _ in 0..entry.weight {
            out.examples.extend(parsed.iter().cloned());
        }
    }
    Ok(out)
}

/// Writes examples as a TSV body (no trailing metadata).
pub fn to_tsv<'a>(examples: impl IntoIterator<Item = &'a ParallelExample>) -> String {
    let mut s = String::new();
    for ex in examples {
        s.push_str(&ex.src_text);
        s.push('\t');
        s.push_str(&ex.tgt_text);
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn empty_manifest_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.toml", "");
        let c = load_manifest(dir.path().join("m.toml")).unwrap();
        assert!(c.examples.is_empty());
        assert_eq!(c.skipped_lines, 0);
    }

    #[test]
    fn three_lines_three_examples_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.tsv", "hola\tbon dia\nadeu\tadios\nsi\tsi\nno tab here\n");
        write(
            dir.path(),
            "m.toml",
            "[[file]]\npath = \"a.tsv\"\nsrc_lang = \"spa_Latn\"\ntgt_lang = \"cat_Latn\"\n",
        );
        let c = load_manifest(dir.path().join("m.toml")).unwrap();
        assert_eq!(c.examples.len(), 3);
        assert_eq!(c.skipped_lines, 1);
        assert_eq!(c.examples[1].src_text, "adeu");
        assert_eq!(c.examples[0].tgt_lang, "cat_Latn");
    }

    #[test]
    fn weight_repeats_lines() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.tsv", "x\ty\n");
        write(
            dir.path(),
            "m.toml",
            "[[file]]\npath = \"a.tsv\"\nsrc_lang = \"a\"\ntgt_lang = \"b\"\nweight = 3\n",
        );
        assert_eq!(load_manifest(dir.path().join("m.toml")).unwrap().examples.len(), 3);
    }

    #[test]
    fn errors_are_classified() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(dir.path().join("none.toml")), Err(Error::Io { .. })));
        write(dir.path(), "bad.toml", "[[file]\n");
        assert!(matches!(load_manifest(dir.path().join("bad.toml")), Err(Error::Config(_))));
        write(dir.path(), "missing.toml", "[[file]]\npath = \"nope.tsv\"\nsrc_lang = \"a\"\ntgt_lang = \"b\"\n");
        assert!(matches!(load_manifest(dir.path().join("missing.toml")), Err(Error::Io { .. })));
    }
}
