//! Scanpath similarity: Levenshtein ratio and Ratcliff/Obershelp (gestalt)
//! matching over space-joined word sequences, plus aggregation and
//! histogram reporting.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scanpath::truncate_words;

pub fn serialize_words<S: AsRef<str>>(words: &[S]) -> String {
    words
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized indel similarity, `(|a| + |b| - d) / (|a| + |b|)`, where `d`
/// is the edit distance with unit insert/delete and substitution cost 2.
/// Lengths count Unicode scalar values. Two empty strings score 1.
///
/// With substitutions costing two edits, `d = |a| + |b| - 2 * lcs(a, b)`,
/// so the ratio reduces to `2 * lcs / (|a| + |b|)`; the LCS length is
/// computed bit-parallel.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let lcs = lcs_len(&a, &b);
    let distance = total - 2 * lcs;
    (total - distance) as f64 / total as f64
}

/// Bit-parallel longest common subsequence length (Hyyrö), one bit per
/// character of the shorter sequence.
fn lcs_len(a: &[char], b: &[char]) -> usize {
    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if pattern.is_empty() {
        return 0;
    }
    let blocks = pattern.len().div_ceil(64);
    let mut masks: HashMap<char, Vec<u64>> = HashMap::new();
    for (i, &c) in pattern.iter().enumerate() {
        masks.entry(c).or_insert_with(|| vec![0; blocks])[i / 64] |= 1 << (i % 64);
    }
    let mut v = vec![!0u64; blocks];
    for c in text {
        let Some(pm) = masks.get(c) else { continue };
        let mut carry = false;
        for (vw, &mw) in v.iter_mut().zip(pm) {
            let u = *vw & mw;
            let (sum, c1) = vw.overflowing_add(u);
            let (sum, c2) = sum.overflowing_add(u64::from(carry));
            carry = c1 || c2;
            *vw = sum | (*vw - u);
        }
    }
    let tail = pattern.len() % 64;
    v.iter()
        .enumerate()
        .map(|(i, w)| {
            let w = if i == blocks - 1 && tail != 0 {
                w | !((1u64 << tail) - 1)
            } else {
                *w
            };
            w.count_zeros() as usize
        })
        .sum()
}

/// Ratcliff/Obershelp similarity `2K / (|a| + |b|)`. `K` sums the lengths of
/// the longest common substring and, recursively, of the matches in the
/// regions to its left and right. Ties prefer the leftmost start in `a`,
/// then in `b`. That tie rule makes the raw recursion order dependent
/// (`"int void checkDelete"` against `"verbose for"` gives 4/31 one way and
/// 6/31 the other), so the lexicographically smaller string always plays
/// `a`. Two empty strings score 1.
pub fn gestalt_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / total as f64
}

fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut matched = 0;
    let mut pending = vec![(0, a.len(), 0, b.len())];
    let mut row = Vec::new();
    let mut next = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi, &mut row, &mut next);
        if k == 0 {
            continue;
        }
        matched += k;
        if alo < i && blo < j {
            pending.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            pending.push((i + k, ahi, j + k, bhi));
        }
    }
    matched
}

/// Longest common substring of `a[alo..ahi]` and `b[blo..bhi]` as
/// `(start_a, start_b, len)`. Scanning ends in increasing order and only
/// replacing on a strictly longer match keeps the leftmost tie.
#[allow(clippy::too_many_arguments)]
fn longest_match(
    a: &[char],
    b: &[char],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    row: &mut Vec<usize>,
    next: &mut Vec<usize>,
) -> (usize, usize, usize) {
    let width = bhi - blo;
    row.clear();
    row.resize(width + 1, 0);
    next.clear();
    next.resize(width + 1, 0);
    let (mut bi, mut bj, mut best) = (alo, blo, 0);
    for (i, &ca) in a.iter().enumerate().take(ahi).skip(alo) {
        for j in 0..width {
            next[j + 1] = if ca == b[blo + j] { row[j] + 1 } else { 0 };
            if next[j + 1] > best {
                best = next[j + 1];
                bi = i + 1 - best;
                bj = blo + j + 1 - best;
            }
        }
        std::mem::swap(row, next);
    }
    (bi, bj, best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub levenshtein: f64,
    pub gestalt: f64,
}

/// Truncates both sequences to their first `n` words and scores the
/// space-joined strings with both metrics.
pub fn score<S: AsRef<str>>(pred: &[S], reference: &[S], n: usize) -> Result<Similarity> {
    let pred: Vec<String> = pred.iter().map(|s| s.as_ref().to_string()).collect();
    let reference: Vec<String> = reference.iter().map(|s| s.as_ref().to_string()).collect();
    let a = serialize_words(truncate_words(&pred, n)?);
    let b = serialize_words(truncate_words(&reference, n)?);
    Ok(Similarity {
        levenshtein: levenshtein_similarity(&a, &b),
        gestalt: gestalt_similarity(&a, &b),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub participant_id: String,
    pub method_id: String,
    pub n: usize,
    pub levenshtein: f64,
    pub gestalt: f64,
}

/// A scored trial tagged with the experiment it belongs to and the id held
/// out by the split that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub experiment: String,
    pub kind_id: String,
    pub pair: ScorePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: String,
    pub n: usize,
    pub count: usize,
    pub mean_levenshtein: f64,
    pub mean_gestalt: f64,
}

/// Means per (experiment, n). Experiments keep their first-seen order and
/// `n` ascends within each; sums run in input order.
pub fn aggregate(scores: &[ScoreRecord]) -> Vec<AggregateRow> {
    let mut experiments: Vec<&str> = Vec::new();
    let mut cells: HashMap<(&str, usize), (usize, f64, f64)> = HashMap::new();
    for s in scores {
        if !experiments.contains(&s.experiment.as_str()) {
            experiments.push(&s.experiment);
        }
        let cell = cells
            .entry((&s.experiment, s.pair.n))
            .or_insert((0, 0.0, 0.0));
        cell.0 += 1;
        cell.1 += s.pair.levenshtein;
        cell.2 += s.pair.gestalt;
    }
    let mut rows = Vec::new();
    for exp in experiments {
        let mut ns: Vec<usize> = cells
            .keys()
            .filter(|(e, _)| *e == exp)
            .map(|(_, n)| *n)
            .collect();
        ns.sort_unstable();
        for n in ns {
            let (count, lev, ges) = cells[&(exp, n)];
            rows.push(AggregateRow {
                experiment: exp.to_string(),
                n,
                count,
                mean_levenshtein: lev / count as f64,
                mean_gestalt: ges / count as f64,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl HistogramBin {
    pub fn is_exact_one(&self) -> bool {
        self.low == 1.0 && self.high == 1.0
    }
}

/// Half-open bins `[k·w, (k+1)·w)` covering `[0, 1)`, followed by a
/// dedicated bin for exact 1.0 scores. `bin_width` must divide 1.
pub fn histogram(scores: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>> {
    let bins = (1.0 / bin_width).round();
    if !(bin_width > 0.0) || bins < 1.0 || (bins * bin_width - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "bin width {bin_width} does not divide 1"
        )));
    }
    let bins = bins as usize;
    let edge = |k: usize| k as f64 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            low: edge(k),
            high: edge(k + 1),
            count: 0,
        })
        .collect();
    let mut exact_one = 0;
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Parameter(format!("score {s} outside [0, 1]")));
        }
        if s == 1.0 {
            exact_one += 1;
            continue;
        }
        let mut k = ((s * bins as f64).floor() as usize).min(bins - 1);
        // settle float rounding against the exact edges
        if s < edge(k) {
            k -= 1;
        } else if s >= edge(k + 1) {
            k += 1;
        }
        out[k].count += 1;
    }
    out.push(HistogramBin {
        low: 1.0,
        high: 1.0,
        count: exact_one,
    });
    Ok(out)
}

fn fmt_score(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_scores_csv<W: Write>(writer: W, scores: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "experiment",
        "kind_id",
        "participant_id",
        "method_id",
        "n",
        "levenshtein",
        "gestalt",
    ])?;
    for s in scores {
        w.write_record([
            s.experiment.as_str(),
            s.kind_id.as_str(),
            s.pair.participant_id.as_str(),
            s.pair.method_id.as_str(),
            &s.pair.n.to_string(),
            &fmt_score(s.pair.levenshtein),
            &fmt_score(s.pair.gestalt),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scores csv>", e))
}

/// Table-shaped report: one row per (experiment, metric), one column per
/// `n` in `n_values`. Cells without samples are left empty.
pub fn write_report_csv<W: Write>(
    writer: W,
    rows: &[AggregateRow],
    n_values: &[usize],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["experiment".to_string(), "metric".to_string()];
    header.extend(n_values.iter().map(|n| format!("n={n}")));
    w.write_record(&header)?;
    let mut experiments: Vec<&str> = Vec::new();
    for r in rows {
        if !experiments.contains(&r.experiment.as_str()) {
            experiments.push(&r.experiment);
        }
    }
    for exp in experiments {
        for metric in ["levenshtein", "gestalt"] {
            let mut record = vec![exp.to_string(), metric.to_string()];
            for n in n_values {
                let cell = rows.iter().find(|r| r.experiment == exp && r.n == *n);
                record.push(cell.map_or(String::new(), |r| {
                    fmt_score(if metric == "levenshtein" {
                        r.mean_levenshtein
                    } else {
                        r.mean_gestalt
                    })
                }));
            }
            w.write_record(&record)?;
        }
    }
    w.flush().map_err(|e| Error::io("<report csv>", e))
}

/// Long-form aggregate with per-cell sample counts.
pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["experiment", "n", "count", "levenshtein", "gestalt"])?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            &r.n.to_string(),
            &r.count.to_string(),
            &fmt_score(r.mean_levenshtein),
            &fmt_score(r.mean_gestalt),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<aggregate csv>", e))
}

pub fn write_histogram_csv<W: Write>(writer: W, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_low", "bin_high", "count"])?;
    // enough decimals to print the bin width exactly, at least one
    let width = bins.first().map_or(1.0, |b| b.high - b.low);
    let decimals = (1..=6)
        .find(|d| {
            let scaled = width * 10f64.powi(*d);
            (scaled - scaled.round()).abs() < 1e-6
        })
        .unwrap_or(6) as usize;
    for b in bins {
        w.write_record([
            format!("{:.*}", decimals, b.low),
            format!("{:.*}", decimals, b.high),
            b.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<histogram csv>", e))
}
