//! Formats parallel pairs as prompts, packs them into fixed-length
//! sequences and shows what the loss and attention see.
//!
//! `cargo run --release --example packing`

use pivotlm::corpus::synthetic::{DigitTask, LANG_A, LANG_B, PIVOT};
use pivotlm::corpus::{format_example, pack_batches, PackConfig};
use pivotlm::toy::{build_corpus, train_tokenizer, ToyCorpusConfig};

fn main() -> pivotlm::Result<()> {
    let corpus = build_corpus(
        &ToyCorpusConfig {
            train_pairs: 200,
            test_pairs: 5,
            ..Default::default()
        },
        1,
    )?;
    let vocab = train_tokenizer(&corpus, 0, 1)?;
    let task: &DigitTask = &corpus.task;
    let pairs = task.pairs(&[vec![3, 1, 4], vec![2, 7], vec![9, 9, 0, 5]], LANG_A, PIVOT);

    let p = format_example(&pairs[0], &vocab)?;
    println!("{} -> {}: {:?} -> {:?}", LANG_A, PIVOT, pairs[0].src_text, pairs[0].tgt_text);
    let r = &p.regions;
    println!(
        "ids {:?}\nbos {:?} src_tag {:?} src_sentence {:?} tgt_tag {:?} tgt_sentence {:?} eos {}",
        p.ids, r.bos, r.src_tag, r.src_sentence, r.tgt_tag, r.tgt_sentence, r.eos
    );

    let mut all = pairs;
    all.extend(task.pairs(&[vec![5, 5, 5, 5, 5, 5]], PIVOT, LANG_B));
    let prompts = all.iter().map(|e| format_example(e, &vocab)).collect::<pivotlm::Result<Vec<_>>>()?;
    for cfg in [
        PackConfig {
            context_len: 32,
            ..Default::default()
        },
        PackConfig {
            context_len: 32,
            block_diagonal: true,
            target_only_loss: true,
            ..Default::default()
        },
    ] {
        let (seqs, stats) = pack_batches(prompts.clone(), &cfg, vocab.pad_id())?;
        println!(
            "\nblock_diagonal={} target_only_loss={}: {} sequences, {} prompts, {} dropped, {} pad tokens",
            cfg.block_diagonal, cfg.target_only_loss, stats.sequences, stats.accepted, stats.dropped, stats.pad_tokens
        );
        for s in &seqs {
            let loss: String = s.loss_mask.iter().map(|&m| if m { 'x' } else { '.' }).collect();
            let seg: String = s.segments.iter().map(|g| char::from_digit(*g % 10, 10).unwrap()).collect();
            println!("  loss {loss}\n  seg  {seg}");
        }
    }
    Ok(())
}
