//! Attention analyses over the prompt regions: per-head region coverage,
//! layer coverage with MinMax normalization, coverage-driven head masks,
//! attention-sink detection and the source-tag ablation harness.
//!
//! Coverage of region `I` by a head is `sum_{j in J} (sum_{i in I} a(j, i))^2`
//! where `a(j, i)` is the weight query position `j` puts on key `i` and `J`
//! are the target-sentence positions.

use std::fmt::Write as _;

use crate::corpus::{format_example, ParallelExample, Region};
use crate::decode::{translate_all, TranslateOptions};
use crate::error::{Error, Result};
use crate::metrics::{bleu, relative_change};
use crate::model::{AttentionRecord, ForwardOptions, HeadMask, Transformer};
use crate::tokenizer::Vocabulary;

/// Coverage of `region` (key positions) by the queries in `decoded`, for one
/// `seq_len x seq_len` attention matrix.
pub fn region_coverage(matrix: &[f32], seq_len: usize, region: &[usize], decoded: &[usize]) -> Result<f64> {
    if decoded.is_empty() {
        return Err(Error::input("no decoded positions"));
    }
    if matrix.len() != seq_len * seq_len {
        return Err(Error::input("attention matrix is not seq_len x seq_len"));
    }
    if region.iter().chain(decoded).any(|&i| i >= seq_len) {
        return Err(Error::input("position outside the sequence"));
    }
    Ok(decoded
        .iter()
        .map(|&j| {
            let paid: f64 = region.iter().map(|&i| matrix[j * seq_len + i] as f64).sum();
            paid * paid
        })
        .sum())
}

/// Mean coverage per (layer, head, region) for one translation direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub src_lang: String,
    pub tgt_lang: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub sentences: usize,
    values: Vec<f64>,
}

impl CoverageReport {
    pub fn zeros(src_lang: &str, tgt_lang: &str, num_layers: usize, num_heads: usize) -> Self {
        Self {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            num_layers,
            num_heads,
            sentences: 0,
            values: vec![0.0; num_layers * num_heads * Region::ALL.len()],
        }
    }

    fn idx(&self, layer: usize, head: usize, region: Region) -> usize {
        (layer * self.num_heads + head) * Region::ALL.len() + region as usize
    }

    pub fn get(&self, layer: usize, head: usize, region: Region) -> f64 {
        self.values[self.idx(layer, head, region)]
    }

    pub fn set(&mut self, layer: usize, head: usize, region: Region, value: f64) {
        let i = self.idx(layer, head, region);
        self.values[i] = value;
    }

    pub fn direction(&self) -> String {
        format!("{}-{}", self.src_lang, self.tgt_lang)
    }

    /// Long format: `direction,layer,head,region,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("direction,layer,head,region,value\n");
        for l in 0..self.num_layers {
            for h in 0..self.num_heads {
                for r in Region::ALL {
                    writeln!(s, "{},{l},{h},{},{:.6e}", self.direction(), r.name(), self.get(l, h, r)).expect("string write");
                }
            }
        }
        s
    }

    /// One region as a `layers x heads` matrix (rows are layers).
    pub fn heatmap_csv(&self, region: Region) -> String {
        let mut s = String::from("layer");
        for h in 0..self.num_heads {
            write!(s, ",head{h}").expect("string write");
        }
        s.push('\n');
        for l in 0..self.num_layers {
            write!(s, "{l}").expect("string write");
            for h in 0..self.num_heads {
                write!(s, ",{:.6e}", self.get(l, h, region)).expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

/// Adds one sentence's coverage values into `acc`.
pub fn accumulate_sentence(acc: &mut CoverageReport, att: &AttentionRecord, regions: &crate::corpus::Regions) -> Result<()> {
    let decoded: Vec<usize> = regions.tgt_sentence.clone().collect();
    for l in 0..acc.num_layers {
        for h in 0..acc.num_heads {
            for r in Region::ALL {
                let region: Vec<usize> = regions.get(r).collect();
                let v = region_coverage(att.matrix(l, h), att.seq_len, &region, &decoded)?;
                let i = acc.idx(l, h, r);
                acc.values[i] += v;
            }
        }
    }
    acc.sentences += 1;
    Ok(())
}

/// Teacher-forced coverage averaged over `dataset`.
pub fn average_coverage_report(
    model: &Transformer<f32>,
    mask: Option<&HeadMask>,
    vocab: &Vocabulary,
    dataset: &[ParallelExample],
) -> Result<CoverageReport> {
    let first = dataset.first().ok_or_else(|| Error::input("empty dataset"))?;
    let (src, tgt) = first.direction();
    let c = model.config();
    let mut report = CoverageReport::zeros(src, tgt, c.num_layers, c.num_heads);
    for ex in dataset {
        if ex.direction() != (src, tgt) {
            return Err(Error::input("dataset mixes translation directions"));
        }
        let p = format_example(ex, vocab)?;
        let out = model.forward(
            &p.ids,
            &ForwardOptions {
                mask,
                capture_attention: true,
                ..Default::default()
            },
        )?;
        accumulate_sentence(&mut report, out.attention.as_ref().expect("captured"), &p.regions)?;
    }
    let n = report.sentences as f64;
    for v in report.values.iter_mut() {
        *v /= n;
    }
    Ok(report)
}

/// Per-layer coverage summed over heads and regions, MinMax-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCoverage {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// All layers had the same raw value; `normalized` is all zeros.
    pub degenerate: bool,
}

impl LayerCoverage {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if raw.is_empty() || max == min {
            log::warn!("layer coverage is constant across layers; normalization is degenerate");
            return Self {
                normalized: vec![0.0; raw.len()],
                raw,
                degenerate: true,
            };
        }
        let normalized = raw.iter().map(|&r| (r - min) / (max - min)).collect();
        Self {
            raw,
            normalized,
            degenerate: false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,raw,normalized\n");
        for (l, (r, n)) in self.raw.iter().zip(&self.normalized).enumerate() {
            writeln!(s, "{l},{r:.6e},{n:.6}").expect("string write");
        }
        s
    }
}

pub fn layer_coverage(report: &CoverageReport) -> LayerCoverage {
    let raw = (0..report.num_layers)
        .map(|l| {
            (0..report.num_heads)
                .flat_map(|h| Region::ALL.map(|r| report.get(l, h, r)))
                .sum()
        })
        .collect();
    LayerCoverage::from_raw(raw)
}

/// Layer coverage averaged over directions.
pub fn mean_layer_coverage(reports: &[CoverageReport]) -> LayerCoverage {
    let layers = reports.first().map_or(0, |r| r.num_layers);
    let mut raw = vec![0.0; layers];
    for r in reports {
        for (acc, v) in raw.iter_mut().zip(layer_coverage(r).raw) {
            *acc += v / reports.len() as f64;
        }
    }
    LayerCoverage::from_raw(raw)
}

/// Every head of every layer whose normalized coverage is below `threshold`.
pub fn mask_by_threshold(lc: &LayerCoverage, threshold: f64, num_heads: usize) -> HeadMask {
    HeadMask::whole_layers(
        lc.normalized
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < threshold)
            .map(|(l, _)| l),
        num_heads,
    )
}

/// Share of each region's total coverage carried by the masked heads.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionShares {
    /// Percentages in `Region::ALL` order.
    pub percent: [f64; 4],
    /// Regions whose total coverage was zero (reported as 0%).
    pub zero_total: [bool; 4],
}

pub fn masked_coverage_share(mask: &HeadMask, report: &CoverageReport) -> Result<RegionShares> {
    if mask.iter().any(|(l, h)| l >= report.num_layers || h >= report.num_heads) {
        return Err(Error::input("mask index outside the report"));
    }
    let mut out = RegionShares {
        percent: [0.0; 4],
        zero_total: [false; 4],
    };
    for (k, r) in Region::ALL.into_iter().enumerate() {
        let mut total = 0.0;
        let mut masked = 0.0;
        for l in 0..report.num_layers {
            for h in 0..report.num_heads {
                let v = report.get(l, h, r);
                total += v;
                if mask.contains(l, h) {
                    masked += v;
                }
            }
        }
        if total == 0.0 {
            out.zero_total[k] = true;
        } else {
            out.percent[k] = 100.0 * masked / total;
        }
    }
    Ok(out)
}

/// Layers whose BOS coverage is at least `dominance` of the four-region total
/// (both summed over heads). Layers with zero coverage are never sinks.
pub fn detect_sink_layers(report: &CoverageReport, dominance: f64) -> Vec<usize> {
    (0..report.num_layers)
        .filter(|&l| {
            let mut bos = 0.0;
            let mut all = 0.0;
            for h in 0..report.num_heads {
                bos += report.get(l, h, Region::Bos);
                all += Region::ALL.iter().map(|&r| report.get(l, h, r)).sum::<f64>();
            }
            all > 0.0 && bos >= dominance * all * (1.0 - 1e-12)
        })
        .collect()
}

/// One direction's evaluation data.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub src_lang: String,
    pub tgt_lang: String,
    pub sources: Vec<String>,
    pub references: Vec<String>,
}

impl EvalSet {
    pub fn from_examples(examples: &[ParallelExample]) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::input("empty evaluation set"))?;
        if examples.iter().any(|e| e.direction() != first.direction()) {
            return Err(Error::input("evaluation set mixes directions"));
        }
        Ok(Self {
            src_lang: first.src_lang.clone(),
            tgt_lang: first.tgt_lang.clone(),
            sources: examples.iter().map(|e| e.src_text.clone()).collect(),
            references: examples.iter().map(|e| e.tgt_text.clone()).collect(),
        })
    }

    pub fn direction(&self) -> String {
        format!("{}-{}", self.src_lang, self.tgt_lang)
    }

    /// Translates every source line and scores against the references.
    pub fn bleu(&self, model: &Transformer<f32>, mask: Option<&HeadMask>, vocab: &Vocabulary, opts: &TranslateOptions) -> Result<(f64, Vec<String>)> {
        let hyps = translate_all(model, mask, vocab, &self.src_lang, &self.tgt_lang, &self.sources, opts)?;
        Ok((bleu(&hyps, &self.references)?, hyps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub src_lang: String,
    pub tgt_lang: String,
    pub baseline: f64,
    pub ablated: f64,
    /// `None` when the baseline BLEU is zero.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Mean relative change per source language over its scored targets.
    pub by_source: Vec<(String, f64)>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("src_lang,tgt_lang,bleu,bleu_ablated,relative_change\n");
        for r in &self.rows {
            let change = r.change.map_or_else(|| "skipped".to_string(), |c| format!("{c:.4}"));
            writeln!(s, "{},{},{:.4},{:.4},{change}", r.src_lang, r.tgt_lang, r.baseline, r.ablated).expect("string write");
        }
        for (src, mean) in &self.by_source {
            writeln!(s, "{src},*,,,{mean:.4}").expect("string write");
        }
        s
    }
}

/// BLEU with normal and source-tag-ablated prompts for every direction.
pub fn ablation_sweep(
    model: &Transformer<f32>,
    vocab: &Vocabulary,
    sets: &[EvalSet],
    opts: &TranslateOptions,
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for set in sets {
        let normal = TranslateOptions {
            ablate_source_tag: false,
            ..opts.clone()
        };
        let ablated = TranslateOptions {
            ablate_source_tag: true,
            ..opts.clone()
        };
        let (b0, _) = set.bleu(model, None, vocab, &normal)?;
        let (b1, _) = set.bleu(model, None, vocab, &ablated)?;
        let change = if b0 == 0.0 {
            log::warn!("{}: baseline BLEU is zero, direction skipped", set.direction());
            None
        } else {
            Some(relative_change(b0, b1)?)
        };
        rows.push(AblationRow {
            src_lang: set.src_lang.clone(),
            tgt_lang: set.tgt_lang.clone(),
            baseline: b0,
            ablated: b1,
            change,
        });
    }
    let mut sources: Vec<String> = rows.iter().map(|r| r.src_lang.clone()).collect();
    sources.sort();
    sources.dedup();
    let by_source = sources
        .into_iter()
        .filter_map(|src| {
            let changes: Vec<f64> = rows.iter().filter(|r| r.src_lang == src).filter_map(|r| r.change).collect();
            (!changes.is_empty()).then(|| (src, changes.iter().sum::<f64>() / changes.len() as f64))
        })
        .collect();
    Ok(AblationTable { rows, by_source })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub masked_heads: usize,
    pub bleu: f64,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("threshold,masked_heads,bleu\n");
    for r in rows {
        writeln!(s, "{:.2},{},{:.4}", r.threshold, r.masked_heads, r.bleu).expect("string write");
    }
    s
}

/// BLEU of `set` under the threshold mask for each threshold.
pub fn mask_sweep(
    model: &Transformer<f32>,
    vocab: &Vocabulary,
    lc: &LayerCoverage,
    set: &EvalSet,
    thresholds: &[f64],
    opts: &TranslateOptions,
) -> Result<Vec<SweepRow>> {
    let heads = model.config().num_heads;
    thresholds
        .iter()
        .map(|&t| {
            let mask = mask_by_threshold(lc, t, heads);
            let (b, _) = set.bleu(model, Some(&mask), vocab, opts)?;
            Ok(SweepRow {
                threshold: t,
                masked_heads: mask.len(),
                bleu: b,
            })
        })
        .collect()
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
