//! Fits a low-rank subspace per language at every layer and prints the
//! mean pairwise affine-invariant distance.
//!
//! `cargo run --release --example subspace [toy-config.toml]`

mod common;

use pivotlm::geometry::{collect_embeddings, distance_matrix, fit_layer_subspaces, RELATIVE_RIDGE};

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    let langs = toy.corpus.task.codes();
    let mut per_lang = Vec::new();
    for lang in &langs {
        let sentences: Vec<String> = toy
            .corpus
            .test
            .iter()
            .filter(|((s, _), _)| s == lang)
            .flat_map(|(_, ex)| ex.iter().map(|e| e.src_text.clone()))
            .take(40)
            .collect();
        per_lang.push(collect_embeddings(&toy.model, &toy.vocab, lang, &sentences, &langs, false)?);
    }
    println!("layer  mean distance  scaled variance per language ({})", langs.join(" "));
    for layer in 0..=toy.model.config().num_layers {
        let at: Vec<_> = per_lang.iter().map(|e| e[layer].clone()).collect();
        let subs = fit_layer_subspaces(&at, 8, RELATIVE_RIDGE)?;
        let dm = distance_matrix(&subs)?;
        let variance: Vec<String> = subs.iter().map(|s| format!("{:.3}", s.mean_scaled_variance())).collect();
        println!("{layer:5}  {:13.3}  {}", dm.mean_off_diagonal(), variance.join(" "));
    }
    Ok(())
}
