//! Caption quality metrics: BLEU-1..4, ROUGE-L and exact-match METEOR.
//!
//! All metrics take pre-tokenized lowercase tokens and return values in
//! `[0, 1]`. The METEOR here is the exact-match variant (no stemming or
//! synonym resources), a documented lower bound on the full matcher.

use std::collections::HashMap;

/// Lowercase tokenization on non-alphanumeric boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-n: geometric mean of clipped n-gram precisions for orders `1..=n`
/// with the brevity penalty `exp(1 - r/c)` when the candidate is shorter
/// than the closest reference.
pub fn bleu_n(candidate: &[String], references: &[Vec<String>], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be 1..=4");
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for order in 1..=n {
        let cand_counts = ngram_counts(candidate, order);
        let total: usize = cand_counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut clipped = 0usize;
        for (gram, count) in &cand_counts {
            let max_ref = references
                .iter()
                .map(|r| ngram_counts(r, order).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += (*count).min(max_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let precision = (log_sum / n as f64).exp();

    // Closest reference length; ties resolve to the shorter reference.
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|len| (len.abs_diff(c), *len))
        .unwrap();
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * precision
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: longest-common-subsequence F-measure with beta = 1.2.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    let beta2 = 1.2f64 * 1.2;
    (1.0 + beta2) * p * r / (r + beta2 * p)
}

/// Exact-match METEOR: leftmost-greedy unigram alignment, harmonic mean
/// `10PR / (R + 9P)`, chunk penalty `0.5 (chunks / matches)^3`.
pub fn meteor(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    // Leftmost-greedy: each candidate token takes the leftmost unused
    // occurrence of itself in the reference.
    let mut used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (ci, token) in candidate.iter().enumerate() {
        for (ri, rtoken) in reference.iter().enumerate() {
            if !used[ri] && token == rtoken {
                used[ri] = true;
                pairs.push((ci, ri));
                break;
            }
        }
    }
    let matches = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let p = matches / candidate.len() as f64;
    let r = matches / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    // Chunks: maximal runs contiguous in both sequences (pairs are already
    // ordered by candidate position).
    let mut chunks = 1usize;
    for w in pairs.windows(2) {
        let (c0, r0) = w[0];
        let (c1, r1) = w[1];
        if !(c1 == c0 + 1 && r1 == r0 + 1) {
            chunks += 1;
        }
    }
    let penalty = 0.5 * (chunks as f64 / matches).powi(3);
    f_mean * (1.0 - penalty)
}
