use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::synthetic::default_languages;
use crate::corpus::PackConfig;
use crate::decode::TranslateOptions;
use crate::error::{Error, Result};
use crate::geometry::RELATIVE_RIDGE;
use crate::interpret::default_thresholds;
use crate::model::ModelConfig;
use crate::tokenizer::BpeTrainerConfig;
use crate::toy::ToyCorpusConfig;
use crate::training::TrainConfig;

/// Environment variable that overrides `out_dir`.
pub const OUT_DIR_ENV: &str = "PIVOTLM_OUT_DIR";

/// Where the parallel data lives. Unset paths fall back to the `synth`
/// command's output under `out_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretConfig {
    pub thresholds: Vec<f64>,
    pub sink_dominance: f64,
    /// Cap on sentences per direction for teacher-forced coverage.
    pub max_sentences: usize,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            sink_dominance: 0.9,
            max_sentences: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub rank: usize,
    pub ridge_factor: f64,
    /// Sentences per source language.
    pub sentences: usize,
    /// Keep only source-sentence tokens instead of the whole prompt.
    pub source_only: bool,
    /// Layer for the sphere projection; `None` is the last layer.
    pub sphere_layer: Option<usize>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            ridge_factor: RELATIVE_RIDGE,
            sentences: 50,
            source_only: false,
            sphere_layer: None,
        }
    }
}

/// The whole pipeline configuration. Module `seed` fields are replaced by
/// seeds derived from the master `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub synth: ToyCorpusConfig,
    pub tokenizer: BpeTrainerConfig,
    /// `vocab_size` is taken from the tokenizer when left at 0.
    pub model: ModelConfig,
    pub pack: PackConfig,
    pub train: TrainConfig,
    pub decode: TranslateOptions,
    pub interpret: InterpretConfig,
    pub geometry: GeometryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let toy = crate::toy::ToyConfig::default();
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            synth: toy.corpus,
            tokenizer: BpeTrainerConfig {
                vocab_size: 4096,
                languages: default_languages().into_iter().map(|l| l.code).collect(),
                allow_smaller: true,
                ..Default::default()
            },
            model: toy.model,
            pack: toy.pack,
            train: toy.train,
            decode: TranslateOptions::default(),
            interpret: InterpretConfig::default(),
            geometry: GeometryConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Defaults, then the file, then `key.path=value` overrides. Unknown
    /// keys are errors.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            table = text
                .parse::<toml::Table>()
                .map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut unknown = Vec::new();
        let cfg: PipelineConfig = serde_ignored::deserialize(toml::Value::Table(table), |p| unknown.push(p.to_string()))
            .map_err(|e| Error::config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed must be at most i64::MAX to survive a TOML round trip"));
        }
        if self.model.vocab_size != 0 {
            self.model.validate()?;
        }
        if self.geometry.rank == 0 {
            return Err(Error::config("geometry.rank must be at least 1"));
        }
        if !(self.geometry.ridge_factor > 0.0) {
            return Err(Error::config("geometry.ridge_factor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.interpret.sink_dominance) {
            return Err(Error::config("interpret.sink_dominance must lie in [0, 1]"));
        }
        if self.interpret.max_sentences == 0 || self.geometry.sentences == 0 {
            return Err(Error::config("sentence caps must be positive"));
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    // Anything that is not a TOML literal is taken as a bare string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
