use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SentenceStats {
    /// Clipped n-gram matches, n = 1..=4.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-gram counts, n = 1..=4.
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    /// Length of the reference closest to `hyp_len` (shorter wins ties).
    pub ref_len: u64,
}

impl SentenceStats {
    pub fn add(&mut self, other: &SentenceStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// In `[0, 1]`.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    /// Set when some order has no matching n-gram; `bleu` is then 0 (no smoothing).
    pub zero_match: bool,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn lower<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

/// Statistics of `hyp` against one or more references (case-insensitive).
pub fn sentence_stats<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], refs: &[Vec<R>]) -> Result<SentenceStats> {
    if refs.is_empty() {
        return Err(Error::domain("every sentence needs at least one reference"));
    }
    let hyp = lower(hyp);
    let refs: Vec<Vec<String>> = refs.iter().map(|r| lower(r)).collect();
    let mut stats = SentenceStats {
        hyp_len: hyp.len() as u64,
        ..Default::default()
    };
    stats.ref_len = refs
        .iter()
        .map(|r| r.len() as u64)
        .min_by_key(|&r| (r.abs_diff(stats.hyp_len), r))
        .unwrap_or(0);
    for n in 1..=MAX_ORDER {
        let hyp_counts = ngram_counts(&hyp, n);
        // Clip by the most frequent occurrence in any single reference.
        let mut max_ref: HashMap<&[String], u64> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        stats.totals[n - 1] = hyp_counts.values().sum();
        stats.matches[n - 1] = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    Ok(stats)
}

pub fn corpus_bleu_from_stats(stats: &SentenceStats) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    let mut zero_match = false;
    for n in 0..MAX_ORDER {
        if stats.matches[n] == 0 {
            zero_match = true;
        } else {
            precisions[n] = stats.matches[n] as f64 / stats.totals[n] as f64;
        }
    }
    let (h, r) = (stats.hyp_len as f64, stats.ref_len as f64);
    let brevity_penalty = if stats.hyp_len >= stats.ref_len {
        1.0
    } else if stats.hyp_len == 0 {
        0.0
    } else {
        (1.0 - r / h).exp()
    };
    let bleu = if zero_match {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        brevity_penalty * mean_log.exp()
    };
    BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
        zero_match,
    }
}

/// Corpus-level 4-gram BLEU. `refs[i]` holds every reference of sentence `i`.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[Vec<H>], refs: &[Vec<Vec<R>>]) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::domain(format!(
            "{} hypotheses but {} reference sets",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = SentenceStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&sentence_stats(h, r)?);
    }
    Ok(corpus_bleu_from_stats(&total))
}
