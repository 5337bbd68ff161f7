//! Projects last-layer token states onto the unit sphere and reports how
//! often a token falls in its own language's Voronoi region.
//!
//! `cargo run --release --example sphere [toy-config.toml]`

mod common;

use pivotlm::geometry::{collect_embeddings, sphere_view};

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    let langs = toy.corpus.task.codes();
    let last = toy.model.config().num_layers;
    let mut per_lang = Vec::new();
    for lang in &langs {
        let sentences: Vec<String> = toy
            .corpus
            .test
            .iter()
            .filter(|((s, _), _)| s == lang)
            .flat_map(|(_, ex)| ex.iter().map(|e| e.src_text.clone()))
            .take(20)
            .collect();
        per_lang.push(collect_embeddings(&toy.model, &toy.vocab, lang, &sentences, &langs, true)?);
    }
    for layer in [0, last / 2, last] {
        let at: Vec<_> = per_lang.iter().map(|e| e[layer].clone()).collect();
        let (points, v) = sphere_view(&at)?;
        let own = points.iter().zip(&v.assignment).filter(|((l, _, _), a)| l == *a).count();
        println!("layer {layer}: {own}/{} tokens in their own language's region", points.len());
        for (lang, c) in langs.iter().zip(&v.centroids) {
            println!("  {lang} centroid ({:+.3}, {:+.3}, {:+.3})", c.x, c.y, c.z);
        }
    }
    Ok(())
}
