//! Replaces the source-language tag with a second BOS and measures the
//! relative BLEU change per direction.
//!
//! `cargo run --release --example ablation [toy-config.toml]`

mod common;

use pivotlm::decode::TranslateOptions;
use pivotlm::interpret::ablation_sweep;
use pivotlm::toy::supervised_directions;

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    let sets = supervised_directions()
        .iter()
        .map(|(s, t)| toy.corpus.eval_set(s, t))
        .collect::<pivotlm::Result<Vec<_>>>()?;
    let table = ablation_sweep(&toy.model, &toy.vocab, &sets, &TranslateOptions::default())?;
    print!("{}", table.to_csv());
    println!();
    for (src, change) in &table.by_source {
        println!("mean relative BLEU change with {src} as source: {change:+.2}%");
    }
    Ok(())
}
