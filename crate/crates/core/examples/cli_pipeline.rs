//! Drives every `pivotlm` subcommand in a temporary directory with a small
//! configuration and lists the artifacts each one writes.
//!
//! `cargo run --release --example cli_pipeline`

const CONFIG: &str = r#"
seed = 3

[synth]
train_pairs = 400
test_pairs = 10

[train]
total_steps = 100
warmup_steps = 10

[interpret]
max_sentences = 10

[geometry]
rank = 4
sentences = 10
"#;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, CONFIG).expect("write config");
    let out = dir.path().join("out");
    for stage in [
        "synth",
        "train-tokenizer",
        "tokenizer-metrics",
        "train",
        "coverage",
        "mask-sweep",
        "ablate",
        "subspace",
        "sphere",
    ] {
        let args = ["pivotlm", "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), stage];
        let code = pivotlm::cli::run(args);
        let mut files: Vec<String> = std::fs::read_dir(out.join(stage))
            .map(|d| d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        files.sort();
        println!("{stage:<18} exit {code}  {}", files.join(" "));
        if code != 0 {
            std::process::exit(code);
        }
    }
    let sweep = std::fs::read_to_string(out.join("mask-sweep/mask_sweep.csv")).expect("sweep output");
    println!("\n{sweep}");
}
