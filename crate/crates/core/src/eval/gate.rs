use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::AlignLabel;
use crate::error::{Error, Result};

/// Sentinel gate value recorded for one emitted token.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub sentence: usize,
    pub step: usize,
    pub token: String,
    pub beta: f64,
}

impl GateRecord {
    /// `sentence TAB step TAB token TAB beta`, β to six decimals.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{:.6}", self.sentence, self.step, self.token, self.beta)
    }

    fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [sentence, step, token, beta] = fields[..] else {
            return Err(format!("expected 4 tab-separated fields, got {}", fields.len()));
        };
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} `{s}`"));
        let beta: f64 = beta.parse().map_err(|_| format!("bad beta `{beta}`"))?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(format!("beta {beta} outside [0, 1]"));
        }
        if token.is_empty() {
            return Err("empty token".into());
        }
        Ok(GateRecord {
            sentence: int(sentence, "sentence index")?,
            step: int(step, "step index")?,
            token: token.to_string(),
            beta,
        })
    }
}

pub fn write_trace(path: &Path, records: &[GateRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a trace file; malformed lines are reported with their line number.
pub fn read_trace(path: &Path) -> Result<Vec<GateRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            GateRecord::parse(l)
                .map_err(|m| Error::Ingestion(format!("{}: line {}: {m}", path.display(), n + 1)))
        })
        .collect()
}

/// Mean β of tokens by alignment class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassMeans {
    pub aligned: Option<f64>,
    pub aligned_count: usize,
    pub inserted: Option<f64>,
    pub inserted_count: usize,
    /// Sentences left out because their trace and label lengths differ.
    pub skipped_sentences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateTable {
    pub threshold: f64,
    /// Records with `β ≥ threshold`.
    pub passing: usize,
    pub total: usize,
    /// `(token, count)`, most frequent first, ties by token.
    pub rows: Vec<(String, usize)>,
    pub class_means: Option<ClassMeans>,
}

fn class_means(records: &[GateRecord], labels: &[Vec<AlignLabel>]) -> ClassMeans {
    let mut by_sentence: BTreeMap<usize, Vec<&GateRecord>> = BTreeMap::new();
    for r in records {
        by_sentence.entry(r.sentence).or_default().push(r);
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    let mut skipped = 0;
    for (sent, recs) in by_sentence {
        let Some(lab) = labels.get(sent) else {
            skipped += 1;
            continue;
        };
        if lab.len() != recs.len() || recs.iter().any(|r| r.step >= lab.len()) {
            skipped += 1;
            continue;
        }
        for r in recs {
            let k = match lab[r.step] {
                AlignLabel::Aligned => 0,
                AlignLabel::Inserted => 1,
            };
            sums[k] += r.beta;
            counts[k] += 1;
        }
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    ClassMeans {
        aligned: mean(0),
        aligned_count: counts[0],
        inserted: mean(1),
        inserted_count: counts[1],
        skipped_sentences: skipped,
    }
}

/// Counts tokens whose gate reaches `threshold` and keeps the `top_n` most frequent.
pub fn gate_analysis(
    records: &[GateRecord],
    threshold: f64,
    top_n: usize,
    labels: Option<&[Vec<AlignLabel>]>,
) -> Result<GateTable> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::domain(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut passing = 0;
    for r in records.iter().filter(|r| r.beta >= threshold) {
        *counts.entry(&r.token).or_insert(0) += 1;
        passing += 1;
    }
    let mut rows: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(top_n);
    Ok(GateTable {
        threshold,
        passing,
        total: records.len(),
        rows,
        class_means: labels.map(|l| class_means(records, l)),
    })
}
