//! Trains a byte-level BPE vocabulary on a few languages and reports how
//! evenly it segments them.
//!
//! `cargo run --release --example tokenizer`

use std::collections::BTreeMap;

use pivotlm::tokenizer::{fertility, train_bpe, vocabulary_overlap, word_types, BpeTrainerConfig, TokenizerMetrics};

const SENTENCES: &[(&str, &[&str])] = &[
    ("cat_Latn", &["El gat dorm al sofà.", "La ciutat és plena de gent.", "Demà plourà a la costa."]),
    ("spa_Latn", &["El gato duerme en el sofá.", "La ciudad está llena de gente.", "Mañana lloverá en la costa."]),
    ("eng_Latn", &["The cat sleeps on the sofa.", "The city is full of people.", "It will rain on the coast tomorrow."]),
    ("eus_Latn", &["Katua sofan lo dago.", "Hiria jendez beteta dago.", "Bihar euria egingo du kostaldean."]),
];

fn main() -> pivotlm::Result<()> {
    let corpus = SENTENCES
        .iter()
        .flat_map(|(l, ss)| ss.iter().map(move |s| (*l, *s)))
        .cycle()
        .take(200);
    let cfg = BpeTrainerConfig {
        vocab_size: 13 + 256 + 120,
        ..Default::default()
    };
    let vocab = train_bpe(corpus, &cfg)?;
    println!("vocabulary: {} tokens, {} merges", vocab.vocab_size(), vocab.merges().len());

    let text = "El gat i el gato dormen.";
    let ids = vocab.encode_normalized(text);
    let pieces: Vec<String> = ids.iter().filter_map(|&i| vocab.id_to_token(i)).collect();
    println!("{text:?} -> {ids:?}");
    println!("pieces {pieces:?}");
    println!("decoded {:?}", vocab.decode(&ids)?);

    let aligned: BTreeMap<String, Vec<String>> = SENTENCES
        .iter()
        .map(|(l, ss)| (l.to_string(), ss.iter().map(|s| s.to_string()).collect()))
        .collect();
    let m = TokenizerMetrics::compute(&vocab, &aligned, "eng_Latn")?;
    println!("\nlang      fertility  parity vs eng");
    for (lang, f) in &m.per_language {
        println!("{lang}  {f:9.3}  {:6.3}", m.parity[lang]);
    }
    let cat = word_types(&aligned["cat_Latn"]);
    let spa = word_types(&aligned["spa_Latn"]);
    println!("\ncat->spa word overlap {:.3}", vocabulary_overlap(&cat, &spa)?);
    println!("fertility of the whole corpus {:.3}", fertility(&vocab, &aligned.values().flatten().collect::<Vec<_>>())?);
    Ok(())
}
