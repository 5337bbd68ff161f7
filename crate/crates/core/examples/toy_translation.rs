//! Trains the digit-word toy system and reports BLEU for every direction,
//! including the two zero-shot pairs that never appear in training.
//!
//! `cargo run --release --example toy_translation [config.toml]`

use std::time::Instant;

use pivotlm::corpus::synthetic::{LANG_A, LANG_B};
use pivotlm::decode::TranslateOptions;
use pivotlm::toy::{random_baseline_bleu, run, supervised_directions, zero_shot_directions, ToyConfig};

fn main() -> pivotlm::Result<()> {
    let cfg: ToyConfig = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| pivotlm::Error::Input(format!("{path}: {e}")))?;
            toml::from_str(&text).map_err(|e| pivotlm::Error::Config(e.to_string()))?
        }
        None => ToyConfig::default(),
    };
    let start = Instant::now();
    let every = (cfg.train.total_steps / 20).max(1);
    let result = run(&cfg, 7, |r| {
        if r.step % every == 0 {
            println!("step {:>5}  lr {:.2e}  loss {:.4}  |g| {:.3}  {:.0}s", r.step, r.lr, r.loss, r.grad_norm, start.elapsed().as_secs_f64());
        }
    })?;
    println!(
        "vocab {}  params {}  sequences {}  trained in {:.0}s",
        result.vocab.vocab_size(),
        result.model.parameter_count(),
        result.pack_stats.sequences,
        start.elapsed().as_secs_f64()
    );
    let opts = TranslateOptions::default();
    for (label, dirs) in [("supervised", supervised_directions()), ("zero-shot", zero_shot_directions())] {
        for ((s, t), b) in result.bleu_by_direction(&dirs, None, &opts)? {
            let set = result.corpus.eval_set(&s, &t)?;
            let base = random_baseline_bleu(&result.corpus.task, &set, 1)?;
            println!("{label:<10} {s}->{t}  BLEU {b:6.2}  random {base:5.2}");
        }
    }
    let set = result.corpus.eval_set(LANG_A, LANG_B)?;
    let (_, hyps) = set.bleu(&result.model, None, &result.vocab, &opts)?;
    for ((src, hyp), reference) in set.sources.iter().zip(&hyps).zip(&set.references).take(5) {
        println!("  {src} => {hyp} (ref {reference})");
    }
    println!("total {:.0}s", start.elapsed().as_secs_f64());
    Ok(())
}
