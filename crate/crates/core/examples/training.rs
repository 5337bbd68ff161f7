//! The learning-rate schedule, a short training run with gradient clipping,
//! and a checkpoint round trip.
//!
//! `cargo run --release --example training`

use pivotlm::model::{Checkpoint, ModelConfig, Transformer};
use pivotlm::toy::{build_corpus, pack_corpus, supervised_directions, train_tokenizer, ToyConfig, ToyCorpusConfig};
use pivotlm::training::{evaluate_loss, lr_at_step, train, TrainConfig};

fn main() -> pivotlm::Result<()> {
    let schedule = TrainConfig::default();
    println!("default schedule:");
    for step in [0, 500, 1000, 2000, 5000, 10_000] {
        println!("  lr({step:>5}) = {:.3e}", lr_at_step(&schedule, step)?);
    }

    let toy = ToyConfig::default();
    let corpus = build_corpus(
        &ToyCorpusConfig {
            train_pairs: 1000,
            test_pairs: 20,
            ..Default::default()
        },
        3,
    )?;
    let vocab = train_tokenizer(&corpus, 0, 3)?;
    let (data, stats) = pack_corpus(&corpus.train, &vocab, &toy.pack)?;
    let held: Vec<_> = supervised_directions()
        .into_iter()
        .flat_map(|d| corpus.test[&d].clone())
        .collect();
    let (held, _) = pack_corpus(&held, &vocab, &toy.pack)?;
    let model = Transformer::new(
        ModelConfig {
            hidden_dim: 64,
            num_layers: 2,
            intermediate_size: 128,
            num_heads: 2,
            head_size: 32,
            max_seq_len: 64,
            ..ModelConfig::toy(vocab.vocab_size())
        },
        3,
    )?;
    println!("\n{} parameters, {} packed sequences", model.parameter_count(), stats.sequences);
    println!("held-out loss before training {:.4}", evaluate_loss(&model, &held)?);

    let cfg = TrainConfig {
        peak_lr: 3e-3,
        warmup_steps: 20,
        total_steps: 200,
        batch_tokens: 512,
        seed: 3,
        ..Default::default()
    };
    let (ck, trace) = train(model, &data, &cfg, |r, _| {
        if r.step % 25 == 0 {
            println!(
                "step {:>3}  lr {:.2e}  loss {:.4}  grad norm {:.3} -> {:.3}",
                r.step, r.lr, r.loss, r.grad_norm, r.clipped_norm
            );
        }
    })?;
    let clipped = trace.iter().filter(|r| r.grad_norm > cfg.clip_norm).count();
    println!("{clipped} of {} steps were clipped", trace.len());
    println!("held-out loss after training {:.4}", evaluate_loss(&ck.model, &held)?);

    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes)?;
    println!("checkpoint {} bytes, reloads identically: {}", bytes.len(), back.to_bytes() == bytes);
    Ok(())
}
