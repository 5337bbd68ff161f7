//! Masks whole layers in order of increasing attention coverage and tracks
//! BLEU as more heads are removed.
//!
//! `cargo run --release --example mask_sweep [toy-config.toml]`

mod common;

use pivotlm::decode::TranslateOptions;
use pivotlm::interpret::{
    average_coverage_report, default_thresholds, mask_by_threshold, mask_sweep, masked_coverage_share, mean_layer_coverage,
};
use pivotlm::toy::supervised_directions;

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    let dirs = supervised_directions();
    let reports = dirs
        .iter()
        .map(|(s, t)| average_coverage_report(&toy.model, None, &toy.vocab, &toy.corpus.test[&(s.clone(), t.clone())]))
        .collect::<pivotlm::Result<Vec<_>>>()?;
    let lc = mean_layer_coverage(&reports);
    println!("normalized layer coverage {:.3?}", lc.normalized);

    let heads = toy.model.config().num_heads;
    let opts = TranslateOptions::default();
    let thresholds = default_thresholds();
    let mut mean = vec![0.0; thresholds.len()];
    for (s, t) in &dirs {
        let set = toy.corpus.eval_set(s, t)?;
        for (m, row) in mean.iter_mut().zip(mask_sweep(&toy.model, &toy.vocab, &lc, &set, &thresholds, &opts)?) {
            *m += row.bleu / dirs.len() as f64;
        }
    }
    println!("\nthreshold  masked heads  mean BLEU  share of source-sentence coverage removed");
    for (&th, b) in thresholds.iter().zip(&mean) {
        let mask = mask_by_threshold(&lc, th, heads);
        let share = masked_coverage_share(&mask, &reports[0])?;
        println!("{th:9.1}  {:12}  {b:9.2}  {:6.1}%", mask.len(), share.percent[2]);
    }
    Ok(())
}
