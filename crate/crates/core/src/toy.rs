//! The digit-word translation experiment end to end: corpus splits, a small
//! tokenizer, packing, training and per-direction evaluation.
//!
//! Only pivot-centred directions are trained; the non-pivot pairs are
//! evaluated zero-shot.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::synthetic::{default_languages, shuffle_examples, DigitLanguage, DigitTask, LANG_A, LANG_B, PIVOT};
use crate::corpus::{format_example, pack_batches, PackConfig, PackStats, PackedSequence, ParallelExample};
use crate::decode::TranslateOptions;
use crate::error::{Error, Result};
use crate::interpret::EvalSet;
use crate::metrics::bleu;
use crate::model::{HeadMask, ModelConfig, Transformer};
use crate::seed::{derive_seed, Stage};
use crate::tokenizer::{train_bpe, BpeTrainerConfig, Vocabulary};
use crate::training::{train, StepRecord, TrainConfig};

/// Size of the toy corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCorpusConfig {
    /// Training pairs per supervised direction.
    pub train_pairs: usize,
    /// Held-out pairs per evaluated direction.
    pub test_pairs: usize,
    pub min_digits: usize,
    pub max_digits: usize,
    /// Pivot, A and B in that order.
    pub languages: Vec<DigitLanguage>,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            train_pairs: 12_500,
            test_pairs: 100,
            min_digits: 2,
            max_digits: 7,
            languages: default_languages(),
        }
    }
}

pub fn supervised_directions() -> Vec<(String, String)> {
    [(LANG_A, PIVOT), (PIVOT, LANG_A), (PIVOT, LANG_B), (LANG_B, PIVOT)]
        .map(|(s, t)| (s.to_string(), t.to_string()))
        .to_vec()
}

pub fn zero_shot_directions() -> Vec<(String, String)> {
    [(LANG_A, LANG_B), (LANG_B, LANG_A)]
        .map(|(s, t)| (s.to_string(), t.to_string()))
        .to_vec()
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub task: DigitTask,
    /// Shuffled training pairs over the supervised directions.
    pub train: Vec<ParallelExample>,
    /// Held-out pairs keyed by direction, supervised and zero-shot alike.
    pub test: BTreeMap<(String, String), Vec<ParallelExample>>,
}

/// Each training direction draws its own numbers; test numbers never occur
/// in training.
pub fn build_corpus(cfg: &ToyCorpusConfig, seed: u64) -> Result<ToyCorpus> {
    if cfg.train_pairs == 0 || cfg.test_pairs == 0 {
        return Err(Error::config("train_pairs and test_pairs must be positive"));
    }
    if cfg.min_digits == 0 || cfg.min_digits > cfg.max_digits {
        return Err(Error::config("need 1 <= min_digits <= max_digits"));
    }
    let task = DigitTask {
        min_digits: cfg.min_digits,
        max_digits: cfg.max_digits,
        languages: cfg.languages.clone(),
    };
    let sup = supervised_directions();
    let zs = zero_shot_directions();
    let held: Vec<Vec<u8>> = task.sample_numbers(cfg.test_pairs * (sup.len() + zs.len()), seed, &HashSet::new());
    let exclude: HashSet<Vec<u8>> = held.iter().cloned().collect();

    let mut test = BTreeMap::new();
    for (i, (s, t)) in sup.iter().chain(&zs).enumerate() {
        let nums = &held[i * cfg.test_pairs..(i + 1) * cfg.test_pairs];
        test.insert((s.clone(), t.clone()), task.pairs(nums, s, t));
    }
    let mut train = Vec::with_capacity(cfg.train_pairs * sup.len());
    for (i, (s, t)) in sup.iter().enumerate() {
        let nums = task.sample_numbers(cfg.train_pairs, seed.wrapping_add(1 + i as u64), &exclude);
        train.extend(task.pairs(&nums, s, t));
    }
    Ok(ToyCorpus {
        train: shuffle_examples(train, seed),
        task,
        test,
    })
}

impl ToyCorpus {
    /// `(language, sentence)` pairs from the training side of every example.
    pub fn tokenizer_text(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.train.len() * 2);
        for e in &self.train {
            out.push((e.src_lang.clone(), e.src_text.clone()));
            out.push((e.tgt_lang.clone(), e.tgt_text.clone()));
        }
        out
    }

    pub fn eval_set(&self, src: &str, tgt: &str) -> Result<EvalSet> {
        let ex = self
            .test
            .get(&(src.to_string(), tgt.to_string()))
            .ok_or_else(|| Error::input(format!("no test set for {src}-{tgt}")))?;
        EvalSet::from_examples(ex)
    }
}

/// BLEU of random target-language words, one per reference word.
pub fn random_baseline_bleu(task: &DigitTask, set: &EvalSet, seed: u64) -> Result<f64> {
    let lang = task
        .language(&set.tgt_lang)
        .ok_or_else(|| Error::input(format!("{} is not a task language", set.tgt_lang)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyps: Vec<String> = set
        .references
        .iter()
        .map(|r| {
            let n = r.split_whitespace().count();
            (0..n)
                .map(|_| lang.words.choose(&mut rng).expect("ten words").as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    bleu(&hyps, &set.references)
}

/// Everything needed to run the experiment from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub corpus: ToyCorpusConfig,
    pub tokenizer_vocab_size: usize,
    pub model: ModelConfig,
    pub pack: PackConfig,
    pub train: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        // Six narrow layers, about 1.2M parameters with the toy vocabulary.
        let model = ModelConfig {
            num_layers: 6,
            intermediate_size: 384,
            max_seq_len: 64,
            ..ModelConfig::toy(0)
        };
        Self {
            corpus: ToyCorpusConfig::default(),
            tokenizer_vocab_size: 0,
            model,
            pack: PackConfig {
                context_len: 64,
                max_prompt_len: None,
                block_diagonal: true,
                target_only_loss: true,
            },
            train: TrainConfig {
                peak_lr: 3e-3,
                warmup_steps: 100,
                total_steps: 1000,
                batch_tokens: 1024,
                ..Default::default()
            },
        }
    }
}

/// A trained toy system.
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub corpus: ToyCorpus,
    pub vocab: Vocabulary,
    pub model: Transformer<f32>,
    pub pack_stats: PackStats,
    pub trace: Vec<StepRecord>,
}

/// Tokenizer for the toy languages. A `vocab_size` of 0 takes every merge
/// the corpus supports.
pub fn train_tokenizer(corpus: &ToyCorpus, vocab_size: usize, seed: u64) -> Result<Vocabulary> {
    let text = corpus.tokenizer_text();
    let languages = corpus.task.codes();
    let base = BpeTrainerConfig {
        languages,
        max_sentences_per_language: Some(2000),
        seed,
        ..Default::default()
    };
    let cfg = if vocab_size > 0 {
        BpeTrainerConfig { vocab_size, ..base }
    } else {
        BpeTrainerConfig {
            vocab_size: usize::MAX,
            allow_smaller: true,
            ..base
        }
    };
    train_bpe(text, &cfg)
}

pub fn pack_corpus(
    examples: &[ParallelExample],
    vocab: &Vocabulary,
    cfg: &PackConfig,
) -> Result<(Vec<PackedSequence>, PackStats)> {
    let prompts = examples.iter().map(|e| format_example(e, vocab)).collect::<Result<Vec<_>>>()?;
    pack_batches(prompts, cfg, vocab.pad_id())
}

/// Builds the corpus and tokenizer, then trains; `observe` sees every step.
/// Each stage draws its own seed from `seed`, as the CLI does.
pub fn run(cfg: &ToyConfig, seed: u64, observe: impl FnMut(&StepRecord)) -> Result<ToyRun> {
    let corpus = build_corpus(&cfg.corpus, derive_seed(seed, Stage::Corpus))?;
    let vocab = train_tokenizer(&corpus, cfg.tokenizer_vocab_size, derive_seed(seed, Stage::Tokenizer))?;
    let (data, pack_stats) = pack_corpus(&corpus.train, &vocab, &cfg.pack)?;
    let mut mc = cfg.model.clone();
    mc.vocab_size = vocab.vocab_size();
    let model = Transformer::new(mc, derive_seed(seed, Stage::ModelInit))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(seed, Stage::Training),
        ..cfg.train.clone()
    };
    let mut observe = observe;
    let (ck, trace) = train(model, &data, &train_cfg, |r, _| observe(r))?;
    Ok(ToyRun {
        corpus,
        vocab,
        model: ck.model,
        pack_stats,
        trace,
    })
}

impl ToyRun {
    /// Corpus BLEU per direction, with an optional head mask.
    pub fn bleu_by_direction(
        &self,
        directions: &[(String, String)],
        mask: Option<&HeadMask>,
        opts: &TranslateOptions,
    ) -> Result<Vec<((String, String), f64)>> {
        directions
            .iter()
            .map(|(s, t)| {
                let set = self.corpus.eval_set(s, t)?;
                let (b, _) = set.bleu(&self.model, mask, &self.vocab, opts)?;
                Ok(((s.clone(), t.clone()), b))
            })
            .collect()
    }
}
