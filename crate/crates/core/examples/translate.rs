//! Greedy and beam decoding with a trained toy model, scored with BLEU and
//! chrF.
//!
//! `cargo run --release --example translate [toy-config.toml]`

mod common;

use pivotlm::decode::{translate_all, BeamConfig, TranslateOptions};
use pivotlm::metrics::{bleu, chrf};
use pivotlm::toy::supervised_directions;

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    for beam_size in [1, 5] {
        let opts = TranslateOptions {
            beam: BeamConfig {
                beam_size,
                ..Default::default()
            },
            ..Default::default()
        };
        println!("\nbeam size {beam_size}");
        for (s, t) in supervised_directions() {
            let set = toy.corpus.eval_set(&s, &t)?;
            let hyps = translate_all(&toy.model, None, &toy.vocab, &s, &t, &set.sources, &opts)?;
            println!(
                "  {s}->{t}  BLEU {:6.2}  chrF {:6.2}  e.g. {:?} => {:?}",
                bleu(&hyps, &set.references)?,
                chrf(&hyps, &set.references)?,
                set.sources[0],
                hyps[0]
            );
        }
    }
    Ok(())
}
