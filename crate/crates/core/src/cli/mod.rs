//! The `pivotlm` command line: one subcommand per pipeline stage.
//!
//! Every command reads the layered configuration (defaults, `--config` file,
//! `--set key=value` overrides), writes its artifacts to
//! `<out_dir>/<command>/` and records a `manifest.toml` there with the
//! resolved configuration, its hash, the seeds and the input files.
//!
//! Exit status: 0 on success, 1 for configuration, input or numerical
//! failures, 2 for usage errors.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{DataConfig, GeometryConfig, InterpretConfig, PipelineConfig, OUT_DIR_ENV};

use crate::corpus::{load_manifest, to_tsv, Manifest, ManifestEntry, ParallelExample, Region};
use crate::decode::translate_all;
use crate::error::{Error, Result};
use crate::geometry::{
    collect_embeddings, distance_matrix, fit_layer_subspaces, sphere_csv, sphere_view,
    LayerEmbeddings,
};
use crate::interpret::{
    ablation_sweep, average_coverage_report, detect_sink_layers, mask_sweep, mean_layer_coverage, sweep_to_csv,
    CoverageReport, EvalSet, SweepRow,
};
use crate::metrics::{bleu, chrf, scores_to_csv, ScoreRow};
use crate::model::{Checkpoint, HeadMask, Transformer};
use crate::seed::{derive_seed, Stage};
use crate::tokenizer::{parity, train_bpe, vocabulary_overlap, word_types, fertility, Vocabulary};
use crate::toy::{build_corpus, pack_corpus};
use crate::training::{trace_to_csv, train};

#[derive(Debug, Parser)]
#[command(name = "pivotlm", version, about = "Pivot-trained decoder-only translation models and their analyses")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.total_steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (also settable through PIVOTLM_OUT_DIR).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic digit-word corpus and its manifests.
    Synth,
    /// Train the BPE vocabulary on the training manifest.
    TrainTokenizer,
    /// Fertility, parity and vocabulary overlap on the test manifest.
    TokenizerMetrics,
    /// Train the model; writes the checkpoint and the loss trace.
    Train,
    /// Translate a file of source sentences, one per line.
    Translate {
        #[arg(long)]
        src_lang: String,
        #[arg(long)]
        tgt_lang: String,
        #[arg(long)]
        input: PathBuf,
        /// Head mask file (`layer,head` per line).
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// BLEU and chrF of a hypothesis file against a reference file.
    Evaluate {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        refs: PathBuf,
    },
    /// Teacher-forced region coverage per test direction.
    Coverage,
    /// BLEU under layer-coverage threshold masks.
    MaskSweep,
    /// BLEU with and without the source tag.
    Ablate,
    /// Per-layer language subspaces and their pairwise distances.
    Subspace,
    /// Sphere projection of token representations with Voronoi regions.
    Sphere,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::TrainTokenizer => "train-tokenizer",
            Command::TokenizerMetrics => "tokenizer-metrics",
            Command::Train => "train",
            Command::Translate { .. } => "translate",
            Command::Evaluate { .. } => "evaluate",
            Command::Coverage => "coverage",
            Command::MaskSweep => "mask-sweep",
            Command::Ablate => "ablate",
            Command::Subspace => "subspace",
            Command::Sphere => "sphere",
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        cfg.out_dir = dir.into();
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::config("no subcommand given (see --help)"));
    };
    let mut ctx = Context::new(cfg, command.name());
    match command {
        Command::Synth => synth(&mut ctx),
        Command::TrainTokenizer => train_tokenizer(&mut ctx),
        Command::TokenizerMetrics => tokenizer_metrics(&mut ctx),
        Command::Train => train_model(&mut ctx),
        Command::Translate {
            src_lang,
            tgt_lang,
            input,
            mask,
        } => translate_file(&mut ctx, src_lang, tgt_lang, input, mask.as_deref()),
        Command::Evaluate { hyps, refs } => evaluate(&mut ctx, hyps, refs),
        Command::Coverage => coverage(&mut ctx),
        Command::MaskSweep => sweep(&mut ctx),
        Command::Ablate => ablate(&mut ctx),
        Command::Subspace => subspace(&mut ctx),
        Command::Sphere => sphere(&mut ctx),
    }?;
    ctx.finish()
}

#[derive(Serialize)]
struct InputRecord {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: BTreeMap<String, String>,
    seed: u64,
    /// Hex, since TOML integers stop at `i64::MAX`.
    stage_seeds: BTreeMap<String, String>,
    config_hash: String,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    config: &'a PipelineConfig,
}

/// Collects inputs and outputs of one command; nothing is written until
/// the command has all of its results.
struct Context {
    cfg: PipelineConfig,
    command: &'static str,
    args: BTreeMap<String, String>,
    inputs: Vec<InputRecord>,
    outputs: Vec<(String, Vec<u8>)>,
    stages: Vec<Stage>,
}

impl Context {
    fn new(cfg: PipelineConfig, command: &'static str) -> Self {
        Self {
            cfg,
            command,
            args: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
        }
    }

    fn dir(&self) -> PathBuf {
        self.cfg.out_dir.join(self.command)
    }

    fn seed(&mut self, stage: Stage) -> u64 {
        if !self.stages.contains(&stage) {
            self.stages.push(stage);
        }
        derive_seed(self.cfg.seed, stage)
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputRecord {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn read_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?).map_err(|_| Error::input(format!("{} is not UTF-8", path.display())))
    }

    fn output(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((name.into(), bytes.into()));
    }

    fn default_input(&self, explicit: &Option<PathBuf>, command: &str, file: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.cfg.out_dir.join(command).join(file))
    }

    fn load_examples(&mut self, manifest: &Option<PathBuf>, default_file: &str) -> Result<Vec<ParallelExample>> {
        let path = self.default_input(manifest, "synth", default_file);
        let text = self.read_text(&path)?;
        let m = Manifest::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &m.files {
            self.read(&base.join(&f.path))?;
        }
        let loaded = load_manifest(&path)?;
        if loaded.skipped_lines > 0 {
            log::warn!("{}: skipped {} malformed lines", path.display(), loaded.skipped_lines);
        }
        Ok(loaded.examples)
    }

    fn load_vocab(&mut self) -> Result<Vocabulary> {
        let path = self.cfg.out_dir.join("train-tokenizer").join("vocab.txt");
        Vocabulary::from_text(&self.read_text(&path)?)
    }

    fn load_model(&mut self) -> Result<Transformer<f32>> {
        let path = self.cfg.out_dir.join("train").join("model.ckpt");
        Ok(Checkpoint::from_bytes(&self.read(&path)?)?.model)
    }

    /// Test examples grouped by direction, in manifest order.
    fn test_sets(&mut self) -> Result<Vec<Vec<ParallelExample>>> {
        let manifest = self.cfg.data.test_manifest.clone();
        let examples = self.load_examples(&manifest, "test.toml")?;
        let mut groups: Vec<Vec<ParallelExample>> = Vec::new();
        for ex in examples {
            match groups.iter_mut().find(|g| g[0].direction() == ex.direction()) {
                Some(g) => g.push(ex),
                None => groups.push(vec![ex]),
            }
        }
        if groups.is_empty() {
            return Err(Error::input("test manifest holds no examples"));
        }
        Ok(groups)
    }

    fn finish(self) -> Result<()> {
        let dir = self.dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest = RunManifest {
            command: self.command,
            args: self.args.clone(),
            seed: self.cfg.seed,
            stage_seeds: self
                .stages
                .iter()
                .map(|&s| (format!("{s:?}").to_lowercase(), format!("{:#018x}", derive_seed(self.cfg.seed, s))))
                .collect(),
            config_hash: self.cfg.hash(),
            inputs: self.inputs,
            outputs: self.outputs.iter().map(|(n, _)| n.clone()).collect(),
            config: &self.cfg,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::format("run manifest", e.to_string()))?;
        for (name, bytes) in &self.outputs {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("manifest.toml");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

fn file_name(kind: &str, src: &str, tgt: &str) -> String {
    format!("{kind}.{src}-{tgt}.tsv")
}

fn synth(ctx: &mut Context) -> Result<()> {
    let seed = ctx.seed(Stage::Corpus);
    let corpus = build_corpus(&ctx.cfg.synth, seed)?;
    let mut train_m = Manifest::default();
    let mut by_dir: BTreeMap<(String, String), Vec<ParallelExample>> = BTreeMap::new();
    for ex in &corpus.train {
        by_dir.entry((ex.src_lang.clone(), ex.tgt_lang.clone())).or_default().push(ex.clone());
    }
    for ((s, t), exs) in &by_dir {
        let name = file_name("train", s, t);
        ctx.output(name.clone(), to_tsv(exs));
        train_m.files.push(ManifestEntry {
            path: name.into(),
            src_lang: s.clone(),
            tgt_lang: t.clone(),
            weight: 1,
        });
    }
    let mut test_m = Manifest::default();
    for ((s, t), exs) in &corpus.test {
        let name = file_name("test", s, t);
        ctx.output(name.clone(), to_tsv(exs));
        test_m.files.push(ManifestEntry {
            path: name.into(),
            src_lang: s.clone(),
            tgt_lang: t.clone(),
            weight: 1,
        });
    }
    ctx.output("train.toml", train_m.to_toml());
    ctx.output("test.toml", test_m.to_toml());
    Ok(())
}

fn train_tokenizer(ctx: &mut Context) -> Result<()> {
    let manifest = ctx.cfg.data.train_manifest.clone();
    let examples = ctx.load_examples(&manifest, "train.toml")?;
    let text = examples
        .iter()
        .flat_map(|e| [(e.src_lang.as_str(), e.src_text.as_str()), (e.tgt_lang.as_str(), e.tgt_text.as_str())]);
    let mut bpe = ctx.cfg.tokenizer.clone();
    bpe.seed = ctx.seed(Stage::Tokenizer);
    let vocab = train_bpe(text, &bpe)?;
    ctx.output("vocab.txt", vocab.to_text());
    Ok(())
}

fn tokenizer_metrics(ctx: &mut Context) -> Result<()> {
    let vocab = ctx.load_vocab()?;
    let sets = ctx.test_sets()?;
    let mut by_lang: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ex in sets.iter().flatten() {
        by_lang.entry(ex.src_lang.clone()).or_default().push(ex.src_text.clone());
        by_lang.entry(ex.tgt_lang.clone()).or_default().push(ex.tgt_text.clone());
    }
    let mut s = String::from("metric,lang,other,value\n");
    for (lang, sentences) in &by_lang {
        writeln!(s, "fertility,{lang},,{:.6}", fertility(&vocab, sentences)?).expect("string write");
    }
    // Each test file is aligned line by line, so parity is taken per file.
    for set in &sets {
        let src: Vec<&str> = set.iter().map(|e| e.src_text.as_str()).collect();
        let tgt: Vec<&str> = set.iter().map(|e| e.tgt_text.as_str()).collect();
        let (sl, tl) = set[0].direction();
        writeln!(s, "parity,{tl},{sl},{:.6}", parity(&vocab, &tgt, &src)?).expect("string write");
    }
    let types: BTreeMap<&String, _> = by_lang.iter().map(|(l, v)| (l, word_types(v))).collect();
    for (a, ta) in &types {
        for (b, tb) in &types {
            if a != b {
                writeln!(s, "vocabulary_overlap,{a},{b},{:.6}", vocabulary_overlap(ta, tb)?).expect("string write");
            }
        }
    }
    ctx.output("tokenizer_metrics.csv", s);
    Ok(())
}

fn train_model(ctx: &mut Context) -> Result<()> {
    let vocab = ctx.load_vocab()?;
    let manifest = ctx.cfg.data.train_manifest.clone();
    let examples = ctx.load_examples(&manifest, "train.toml")?;
    let (data, stats) = pack_corpus(&examples, &vocab, &ctx.cfg.pack)?;
    let mut mc = ctx.cfg.model.clone();
    if mc.vocab_size == 0 {
        mc.vocab_size = vocab.vocab_size();
    } else if mc.vocab_size != vocab.vocab_size() {
        return Err(Error::config(format!(
            "model.vocab_size {} differs from the tokenizer's {}",
            mc.vocab_size,
            vocab.vocab_size()
        )));
    }
    let model = Transformer::new(mc, ctx.seed(Stage::ModelInit))?;
    let mut tc = ctx.cfg.train.clone();
    tc.seed = ctx.seed(Stage::Training);
    let every = (tc.total_steps / 20).max(1);
    let (ck, trace) = train(model, &data, &tc, |r, _| {
        if r.step % every == 0 {
            log::info!("step {} lr {:.3e} loss {:.4} grad_norm {:.3}", r.step, r.lr, r.loss, r.grad_norm);
        }
    })?;
    ctx.output("model.ckpt", ck.to_bytes());
    ctx.output("loss.csv", trace_to_csv(&trace));
    ctx.output(
        "packing.csv",
        format!(
            "accepted,dropped,sequences,pad_tokens\n{},{},{},{}\n",
            stats.accepted, stats.dropped, stats.sequences, stats.pad_tokens
        ),
    );
    Ok(())
}

fn translate_file(ctx: &mut Context, src: &str, tgt: &str, input: &Path, mask: Option<&Path>) -> Result<()> {
    ctx.args.insert("src_lang".into(), src.into());
    ctx.args.insert("tgt_lang".into(), tgt.into());
    ctx.args.insert("input".into(), input.display().to_string());
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model()?;
    let mask = match mask {
        Some(p) => {
            ctx.args.insert("mask".into(), p.display().to_string());
            let m = HeadMask::from_text(&ctx.read_text(p)?)?;
            m.validate(model.config())?;
            Some(m)
        }
        None => None,
    };
    let lines: Vec<String> = ctx.read_text(input)?.lines().map(str::to_owned).collect();
    let hyps = translate_all(&model, mask.as_ref(), &vocab, src, tgt, &lines, &ctx.cfg.decode)?;
    let mut out = hyps.join("\n");
    out.push('\n');
    ctx.output("translations.txt", out);
    Ok(())
}

fn evaluate(ctx: &mut Context, hyps: &Path, refs: &Path) -> Result<()> {
    ctx.args.insert("hyps".into(), hyps.display().to_string());
    ctx.args.insert("refs".into(), refs.display().to_string());
    let h: Vec<String> = ctx.read_text(hyps)?.lines().map(str::to_owned).collect();
    let r: Vec<String> = ctx.read_text(refs)?.lines().map(str::to_owned).collect();
    let rows = vec![
        ScoreRow {
            direction: "all".into(),
            metric: "bleu".into(),
            value: bleu(&h, &r)?,
        },
        ScoreRow {
            direction: "all".into(),
            metric: "chrf".into(),
            value: chrf(&h, &r)?,
        },
    ];
    ctx.output("scores.csv", scores_to_csv(&rows));
    Ok(())
}

fn coverage_reports(ctx: &mut Context, model: &Transformer<f32>, vocab: &Vocabulary) -> Result<Vec<CoverageReport>> {
    let cap = ctx.cfg.interpret.max_sentences;
    ctx.test_sets()?
        .iter()
        .map(|set| average_coverage_report(model, None, vocab, &set[..cap.min(set.len())]))
        .collect()
}

fn coverage(ctx: &mut Context) -> Result<()> {
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model()?;
    let reports = coverage_reports(ctx, &model, &vocab)?;
    let mut sinks = String::from("direction,layer\n");
    for r in &reports {
        let d = r.direction();
        ctx.output(format!("coverage.{d}.csv"), r.to_csv());
        for region in Region::ALL {
            ctx.output(format!("heatmap.{d}.{}.csv", region.name()), r.heatmap_csv(region));
        }
        for l in detect_sink_layers(r, ctx.cfg.interpret.sink_dominance) {
            writeln!(sinks, "{d},{l}").expect("string write");
        }
    }
    ctx.output("sinks.csv", sinks);
    ctx.output("layer_coverage.csv", mean_layer_coverage(&reports).to_csv());
    Ok(())
}

fn sweep(ctx: &mut Context) -> Result<()> {
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model()?;
    let reports = coverage_reports(ctx, &model, &vocab)?;
    let lc = mean_layer_coverage(&reports);
    let sets = ctx.test_sets()?;
    let thresholds = ctx.cfg.interpret.thresholds.clone();
    let mut mean: Vec<SweepRow> = Vec::new();
    let mut per_direction = String::from("direction,threshold,masked_heads,bleu\n");
    for set in &sets {
        let eval = EvalSet::from_examples(set)?;
        let rows = mask_sweep(&model, &vocab, &lc, &eval, &thresholds, &ctx.cfg.decode)?;
        for r in &rows {
            writeln!(per_direction, "{},{:.2},{},{:.4}", eval.direction(), r.threshold, r.masked_heads, r.bleu)
                .expect("string write");
        }
        if mean.is_empty() {
            mean = rows.iter().map(|r| SweepRow { bleu: 0.0, ..r.clone() }).collect();
        }
        for (m, r) in mean.iter_mut().zip(&rows) {
            m.bleu += r.bleu / sets.len() as f64;
        }
    }
    ctx.output("mask_sweep.csv", sweep_to_csv(&mean));
    ctx.output("mask_sweep_by_direction.csv", per_direction);
    ctx.output("layer_coverage.csv", lc.to_csv());
    Ok(())
}

fn ablate(ctx: &mut Context) -> Result<()> {
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model()?;
    let sets = ctx
        .test_sets()?
        .iter()
        .map(|s| EvalSet::from_examples(s))
        .collect::<Result<Vec<_>>>()?;
    let table = ablation_sweep(&model, &vocab, &sets, &ctx.cfg.decode)?;
    ctx.output("ablation.csv", table.to_csv());
    Ok(())
}

/// Per-language embeddings, one entry per language, each with every layer.
/// Languages, their per-layer embeddings, and the model they came from.
type Embedded = (Vec<String>, Vec<Vec<LayerEmbeddings>>, Transformer<f32>);

fn language_embeddings(ctx: &mut Context) -> Result<Embedded> {
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model()?;
    let sets = ctx.test_sets()?;
    let mut sentences: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ex in sets.iter().flatten() {
        sentences.entry(ex.src_lang.clone()).or_default().push(ex.src_text.clone());
        sentences.entry(ex.tgt_lang.clone()).or_default();
    }
    let langs: Vec<String> = sentences.keys().cloned().collect();
    let g = ctx.cfg.geometry.clone();
    let mut out = Vec::new();
    for lang in &langs {
        let mut s = sentences[lang].clone();
        s.sort();
        s.dedup();
        s.truncate(g.sentences);
        if s.is_empty() {
            return Err(Error::input(format!("no source sentences for {lang} in the test manifest")));
        }
        out.push(collect_embeddings(&model, &vocab, lang, &s, &langs, g.source_only)?);
    }
    Ok((langs, out, model))
}

fn subspace(ctx: &mut Context) -> Result<()> {
    let (langs, embs, model) = language_embeddings(ctx)?;
    let g = ctx.cfg.geometry.clone();
    let layers = model.config().num_layers + 1;
    let mut long = String::from("layer,lang_a,lang_b,distance\n");
    let mut means = String::from("layer,mean_distance\n");
    for l in 0..layers {
        let at_layer: Vec<LayerEmbeddings> = embs.iter().map(|e| e[l].clone()).collect();
        let subs = fit_layer_subspaces(&at_layer, g.rank, g.ridge_factor)?;
        let dm = distance_matrix(&subs)?;
        for (i, a) in langs.iter().enumerate() {
            for (j, b) in langs.iter().enumerate() {
                writeln!(long, "{l},{a},{b},{:.8}", dm.values[(i, j)]).expect("string write");
            }
        }
        writeln!(means, "{l},{:.8}", dm.mean_off_diagonal()).expect("string write");
    }
    ctx.output("distances.csv", long);
    ctx.output("layer_means.csv", means);
    Ok(())
}

fn sphere(ctx: &mut Context) -> Result<()> {
    let (langs, embs, model) = language_embeddings(ctx)?;
    let last = model.config().num_layers;
    let layer = ctx.cfg.geometry.sphere_layer.unwrap_or(last);
    if layer > last {
        return Err(Error::config(format!("geometry.sphere_layer {layer} beyond the last layer {last}")));
    }
    let at_layer: Vec<LayerEmbeddings> = embs.iter().map(|e| e[layer].clone()).collect();
    let (points, v) = sphere_view(&at_layer)?;
    ctx.args.insert("layer".into(), layer.to_string());
    ctx.output("sphere.csv", sphere_csv(&langs, &points, &v));
    let mut cents = String::from("lang,X,Y,Z\n");
    for (l, c) in langs.iter().zip(&v.centroids) {
        writeln!(cents, "{l},{:.6},{:.6},{:.6}", c.x, c.y, c.z).expect("string write");
    }
    ctx.output("centroids.csv", cents);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["pivotlm", "frobnicate"]), 2);
    }

    #[test]
    fn bad_override_is_a_validation_error() {
        assert_eq!(run(["pivotlm", "--set", "train.no_such_key=1", "synth"]), 1);
    }
}
