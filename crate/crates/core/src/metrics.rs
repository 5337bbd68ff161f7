//! Corpus BLEU and chrF compatible with the standard sacre-style scorer,
//! plus the small statistics used in the reports.
//!
//! BLEU tokenization ("13a") applies, in order:
//! 1. drop `<skipped>`, join `-\n` line breaks, turn newlines into spaces;
//! 2. if `&` occurs, unescape `&quot;`, `&amp;`, `&lt;`, `&gt;`;
//! 3. pad the line with one space on each side;
//! 4. surround every ASCII symbol in `{|}~`, `[\]^_` + backtick, space to `&`,
//!    `(` to `+`, `:` to `@` and `/` with spaces;
//! 5. split `.` and `,` from a preceding non-digit, then from a following
//!    non-digit;
//! 6. split `-` from a preceding digit (other hyphens stay attached);
//! 7. collapse whitespace runs to single spaces and trim.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

fn rules() -> &'static [(Regex, &'static str); 4] {
    static RULES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            (Regex::new(r"([\{-\~\[-` -&\(-\+:-@/])").expect("regex"), " $1 "),
            (Regex::new(r"([^0-9])([\.,])").expect("regex"), "$1 $2 "),
            (Regex::new(r"([\.,])([^0-9])").expect("regex"), " $1 $2"),
            (Regex::new(r"([0-9])(-)").expect("regex"), "$1 $2 "),
        ]
    })
}

/// The 13a tokenizer; returns the space-joined token string.
pub fn tokenize_13a(line: &str) -> String {
    let mut s = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut s = format!(" {s} ");
    for (re, rep) in rules() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Any zero n-gram precision makes the score zero.
    #[default]
    None,
    /// Zero-match orders get `1 / 2^k` pseudo-counts, doubling per order.
    Exp,
}

/// Sufficient statistics of a BLEU computation.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub sys_len: usize,
    pub ref_len: usize,
    pub correct: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
}

fn ngram_counts<T: Eq + std::hash::Hash + Clone>(toks: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn check_lengths(h: usize, r: usize) -> Result<()> {
    if h != r {
        return Err(Error::input(format!("{h} hypotheses but {r} references")));
    }
    Ok(())
}

/// Corpus BLEU with 13a tokenization and one reference per line.
pub fn bleu(hyps: &[impl AsRef<str>], refs: &[impl AsRef<str>]) -> Result<f64> {
    Ok(bleu_with(hyps, refs, Smoothing::None)?.score)
}

pub fn bleu_with(hyps: &[impl AsRef<str>], refs: &[impl AsRef<str>], smoothing: Smoothing) -> Result<BleuScore> {
    check_lengths(hyps.len(), refs.len())?;
    let mut correct = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut sys_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let ht = tokenize_13a(h.as_ref());
        let rt = tokenize_13a(r.as_ref());
        let hw: Vec<&str> = ht.split(' ').filter(|s| !s.is_empty()).collect();
        let rw: Vec<&str> = rt.split(' ').filter(|s| !s.is_empty()).collect();
        sys_len += hw.len();
        ref_len += rw.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(&hw, n);
            let rc = ngram_counts(&rw, n);
            total[n - 1] += hw.len().saturating_sub(n - 1);
            correct[n - 1] += hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if ref_len == 0 {
        return Err(Error::input("references contain no tokens"));
    }
    Ok(bleu_from_stats(correct, total, sys_len, ref_len, smoothing))
}

fn bleu_from_stats(
    correct: [usize; MAX_ORDER],
    total: [usize; MAX_ORDER],
    sys_len: usize,
    ref_len: usize,
    smoothing: Smoothing,
) -> BleuScore {
    let brevity_penalty = if sys_len == 0 {
        0.0
    } else if sys_len < ref_len {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    } else {
        1.0
    };
    let mut precisions = [0.0; MAX_ORDER];
    let mut out = BleuScore {
        score: 0.0,
        precisions,
        brevity_penalty,
        sys_len,
        ref_len,
        correct,
        total,
    };
    if correct[0] == 0 {
        for n in 0..MAX_ORDER {
            if total[n] > 0 {
                precisions[n] = 100.0 * correct[n] as f64 / total[n] as f64;
            }
        }
        out.precisions = precisions;
        return out;
    }
    let mut smooth = 1.0;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            break;
        }
        precisions[n] = if correct[n] == 0 && smoothing == Smoothing::Exp {
            smooth *= 2.0;
            100.0 / (smooth * total[n] as f64)
        } else {
            100.0 * correct[n] as f64 / total[n] as f64
        };
    }
    out.precisions = precisions;
    if precisions.iter().any(|&p| p == 0.0) {
        return out;
    }
    let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
    out.score = brevity_penalty * mean_log.exp();
    out
}

/// Corpus chrF: character 1..6-grams, whitespace removed, beta = 2.
pub fn chrf(hyps: &[impl AsRef<str>], refs: &[impl AsRef<str>]) -> Result<f64> {
    const ORDER: usize = 6;
    const BETA: f64 = 2.0;
    check_lengths(hyps.len(), refs.len())?;
    // Per order: matches, hypothesis n-grams, reference n-grams.
    let mut stats = [[0usize; 3]; ORDER];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        for n in 1..=ORDER {
            let hg = ngram_counts(&hc, n);
            let rg = ngram_counts(&rc, n);
            let st = &mut stats[n - 1];
            st[0] += hg.iter().map(|(g, &c)| c.min(rg.get(g).copied().unwrap_or(0))).sum::<usize>();
            st[1] += hg.values().sum::<usize>();
            st[2] += rg.values().sum::<usize>();
        }
    }
    let (mut prec, mut rec, mut eff) = (0.0, 0.0, 0usize);
    for st in &stats {
        if st[1] > 0 && st[2] > 0 {
            prec += st[0] as f64 / st[1] as f64;
            rec += st[0] as f64 / st[2] as f64;
            eff += 1;
        }
    }
    if eff == 0 {
        return Ok(0.0);
    }
    let (p, r) = (prec / eff as f64, rec / eff as f64);
    if p + r == 0.0 {
        return Ok(0.0);
    }
    let b2 = BETA * BETA;
    Ok(100.0 * (1.0 + b2) * p * r / (b2 * p + r))
}

/// `100 * (variant - baseline) / baseline`.
pub fn relative_change(baseline: f64, variant: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::input("relative change against a zero baseline"));
    }
    Ok(100.0 * (variant - baseline) / baseline)
}

/// Sample Pearson correlation.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::input("need two equal-length series of at least 2 values"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::input("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One line of a score report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub direction: String,
    pub metric: String,
    pub value: f64,
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("direction,metric,value\n");
    for r in rows {
        writeln!(s, "{},{},{:.4}", r.direction, r.metric, r.value).expect("string write");
    }
    s
}
