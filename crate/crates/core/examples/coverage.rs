//! Teacher-forced attention coverage of each prompt region, per head, and
//! the layers whose heads only attend to the BOS sink.
//!
//! `cargo run --release --example coverage [toy-config.toml]`

mod common;

use pivotlm::corpus::Region;
use pivotlm::interpret::{average_coverage_report, detect_sink_layers, layer_coverage};
use pivotlm::toy::supervised_directions;

fn main() -> pivotlm::Result<()> {
    let toy = common::quick_toy()?;
    let (s, t) = &supervised_directions()[0];
    let examples = &toy.corpus.test[&(s.clone(), t.clone())];
    let report = average_coverage_report(&toy.model, None, &toy.vocab, examples)?;
    println!("{} over {} sentences", report.direction(), report.sentences);
    for region in Region::ALL {
        println!("\n{}\n{}", region.name(), report.heatmap_csv(region));
    }
    let lc = layer_coverage(&report);
    println!("layer coverage (raw, normalized)");
    for (l, (r, n)) in lc.raw.iter().zip(&lc.normalized).enumerate() {
        println!("  layer {l}: {r:8.3}  {n:.3}");
    }
    println!("BOS-sink layers: {:?}", detect_sink_layers(&report, 0.9));
    Ok(())
}
