//! BLEU and chrF against scores produced by the reference scorer on a
//! 20-line multilingual fixture.

use pivotlm::metrics::{bleu, bleu_with, chrf, tokenize_13a, Smoothing};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    bleu: f64,
    chrf: f64,
    sys_len: usize,
    ref_len: usize,
    line_bleu_exp: Vec<f64>,
    line_bleu_none: Vec<f64>,
    line_chrf: Vec<f64>,
    tokenized: Vec<String>,
}

fn load() -> (Vec<String>, Vec<String>, Expected) {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/metric_parity");
    let read = |name: &str| std::fs::read_to_string(format!("{dir}/{name}")).unwrap();
    let lines = |s: String| s.lines().map(str::to_owned).collect::<Vec<_>>();
    let expected: Expected = toml::from_str(&read("expected.toml")).unwrap();
    (lines(read("hyps.txt")), lines(read("refs.txt")), expected)
}

#[test]
fn corpus_scores_match_reference_scorer() {
    let (hyps, refs, e) = load();
    assert_eq!(hyps.len(), 20);
    let b = bleu_with(&hyps, &refs, Smoothing::None).unwrap();
    assert_eq!((b.sys_len, b.ref_len), (e.sys_len, e.ref_len));
    assert!((b.score - e.bleu).abs() < 0.01, "BLEU {} vs {}", b.score, e.bleu);
    let c = chrf(&hyps, &refs).unwrap();
    assert!((c - e.chrf).abs() < 0.01, "chrF {c} vs {}", e.chrf);
}

#[test]
fn sentence_scores_match_reference_scorer() {
    let (hyps, refs, e) = load();
    for i in 0..hyps.len() {
        let h = [&hyps[i]];
        let r = [&refs[i]];
        let none = bleu_with(&h, &r, Smoothing::None).unwrap().score;
        let exp = bleu_with(&h, &r, Smoothing::Exp).unwrap().score;
        let c = chrf(&h, &r).unwrap();
        assert!((none - e.line_bleu_none[i]).abs() < 0.01, "line {i}: {none} vs {}", e.line_bleu_none[i]);
        assert!((exp - e.line_bleu_exp[i]).abs() < 0.01, "line {i}: {exp} vs {}", e.line_bleu_exp[i]);
        assert!((c - e.line_chrf[i]).abs() < 0.01, "line {i}: {c} vs {}", e.line_chrf[i]);
    }
}

#[test]
fn tokenization_matches_reference_scorer() {
    let (hyps, refs, e) = load();
    for (line, want) in hyps.iter().chain(&refs).zip(&e.tokenized) {
        assert_eq!(&tokenize_13a(line), want);
    }
}

#[test]
fn brevity_only_case() {
    let b = bleu(&["a b c d"], &["a b c d e"]).unwrap();
    let oracle = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
    assert!((b - oracle).abs() < 1e-9);
    assert!((b - 77.88).abs() < 0.01);
}
