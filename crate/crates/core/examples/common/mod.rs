//! The digit-word system the analysis examples inspect. By default a small
//! one trained in about a minute; pass a toy config TOML as the first
//! argument to train that instead.

use pivotlm::model::ModelConfig;
use pivotlm::toy::{run, ToyConfig, ToyCorpusConfig, ToyRun};
use pivotlm::training::TrainConfig;

pub fn quick_config() -> ToyConfig {
    let base = ToyConfig::default();
    ToyConfig {
        corpus: ToyCorpusConfig {
            train_pairs: 3000,
            test_pairs: 40,
            ..base.corpus
        },
        model: ModelConfig {
            max_seq_len: 64,
            ..ModelConfig::toy(0)
        },
        train: TrainConfig {
            total_steps: 500,
            warmup_steps: 50,
            ..base.train
        },
        ..base
    }
}

pub fn quick_toy() -> pivotlm::Result<ToyRun> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| pivotlm::Error::Input(format!("{path}: {e}")))?;
            toml::from_str(&text).map_err(|e| pivotlm::Error::Config(e.to_string()))?
        }
        None => quick_config(),
    };
    eprintln!("training a {}-step toy model", cfg.train.total_steps);
    run(&cfg, 7, |r| {
        if r.step % (cfg.train.total_steps / 5).max(1) == 0 {
            eprintln!("  step {:>4} loss {:.4}", r.step, r.loss);
        }
    })
}
