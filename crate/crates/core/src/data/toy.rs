//! Synthetic translation task with unaligned target words.
//!
//! Each source position is a content symbol with a fixed one-word translation.
//! A designated subset of symbols additionally emits an insertion token (such
//! as `the`) right after its translation. That token has no source
//! counterpart of its own and is predictable from the target history alone. Positions draw from the designated subset with the
//! configured probability, which makes that probability the expected share of
//! positions that receive an insertion while keeping the target a
//! deterministic function of the source.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlignLabel {
    /// Translation of a source symbol.
    Aligned,
    /// Inserted token with no source counterpart.
    Inserted,
}

impl AlignLabel {
    pub fn flag(self) -> char {
        match self {
            AlignLabel::Aligned => 'A',
            AlignLabel::Inserted => 'I',
        }
    }

    pub fn parse(flag: &str) -> Option<Self> {
        match flag {
            "A" => Some(AlignLabel::Aligned),
            "I" => Some(AlignLabel::Inserted),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTaskSpec {
    pub alphabet_size: usize,
    pub insertion_tokens: Vec<String>,
    pub insertion_prob: f64,
    pub seed: u64,
    pub size: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            alphabet_size: 26,
            insertion_tokens: vec!["the".into(), "to".into(), "a".into()],
            insertion_prob: 0.25,
            seed: 1,
            size: 2000,
            min_len: 3,
            max_len: 12,
        }
    }
}

/// Source spelling of content symbol `k`: `a`..`z`, then `a1`, `b1`, ...
pub fn source_symbol(k: usize) -> String {
    let letter = (b'a' + (k % 26) as u8) as char;
    match k / 26 {
        0 => letter.to_string(),
        n => format!("{letter}{n}"),
    }
}

/// Target spelling of content symbol `k` (the source spelling written twice).
pub fn target_symbol(k: usize) -> String {
    source_symbol(k).repeat(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpus {
    pub corpus: ParallelCorpus,
    pub labels: Vec<Vec<AlignLabel>>,
}

impl ToyCorpus {
    /// Share of source positions that received an inserted token.
    pub fn insertion_rate(&self) -> f64 {
        let inserted = self.labels.iter().flatten().filter(|&&l| l == AlignLabel::Inserted).count();
        let positions: usize = self.corpus.pairs.iter().map(|p| p.0.len()).sum();
        inserted as f64 / positions.max(1) as f64
    }
}

/// A sampled task instance: which symbols trigger insertions and with which token.
#[derive(Clone, Debug)]
pub struct ToyTask {
    spec: SyntheticTaskSpec,
    /// `Some(token index)` for designated symbols.
    insertion: Vec<Option<usize>>,
    designated: Vec<usize>,
    plain: Vec<usize>,
    rng: ChaCha8Rng,
}

impl ToyTask {
    pub fn new(spec: SyntheticTaskSpec) -> Result<Self> {
        validate(&spec)?;
        let a = spec.alphabet_size;
        let p = spec.insertion_prob;
        let count = if p == 0.0 {
            0
        } else if p == 1.0 {
            a
        } else {
            ((p * a as f64).round() as usize).clamp(1, a - 1)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut symbols: Vec<usize> = (0..a).collect();
        symbols.shuffle(&mut rng);
        let mut designated = symbols[..count].to_vec();
        let mut plain = symbols[count..].to_vec();
        designated.sort_unstable();
        plain.sort_unstable();
        let mut insertion = vec![None; a];
        for (rank, &k) in designated.iter().enumerate() {
            insertion[k] = Some(rank % spec.insertion_tokens.len());
        }
        Ok(ToyTask {
            spec,
            insertion,
            designated,
            plain,
            rng,
        })
    }

    pub fn spec(&self) -> &SyntheticTaskSpec {
        &self.spec
    }

    /// Deterministic translation of a source sentence, with alignment labels.
    pub fn translate(&self, src: &[usize]) -> (Sentence, Vec<AlignLabel>) {
        let mut out = Vec::with_capacity(src.len() * 2);
        let mut labels = Vec::with_capacity(src.len() * 2);
        for &k in src {
            out.push(target_symbol(k));
            labels.push(AlignLabel::Aligned);
            if let Some(t) = self.insertion[k] {
                out.push(self.spec.insertion_tokens[t].clone());
                labels.push(AlignLabel::Inserted);
            }
        }
        (out, labels)
    }

    fn sample_sentence(&mut self) -> Vec<usize> {
        let len = self.rng.gen_range(self.spec.min_len..=self.spec.max_len);
        (0..len)
            .map(|_| {
                let pick_designated = self.rng.gen::<f64>() < self.spec.insertion_prob;
                let pool = if (pick_designated && !self.designated.is_empty()) || self.plain.is_empty() {
                    &self.designated
                } else {
                    &self.plain
                };
                pool[self.rng.gen_range(0..pool.len())]
            })
            .collect()
    }

    /// Draws the next `n` sentence pairs from this task's stream.
    pub fn sample(&mut self, n: usize) -> ToyCorpus {
        let mut corpus = ParallelCorpus::default();
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let src = self.sample_sentence();
            let (tgt, lab) = self.translate(&src);
            corpus.pairs.push((src.iter().map(|&k| source_symbol(k)).collect(), tgt));
            labels.push(lab);
        }
        ToyCorpus { corpus, labels }
    }
}

fn validate(spec: &SyntheticTaskSpec) -> Result<()> {
    if spec.alphabet_size == 0 {
        return Err(Error::Config("toy alphabet must not be empty".into()));
    }
    if !(0.0..=1.0).contains(&spec.insertion_prob) {
        return Err(Error::Config(format!(
            "insertion probability must lie in [0, 1], got {}",
            spec.insertion_prob
        )));
    }
    if spec.insertion_prob > 0.0 && spec.insertion_tokens.is_empty() {
        return Err(Error::Config("insertion probability > 0 requires insertion tokens".into()));
    }
    if spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::Config(format!(
            "invalid toy length range {}..={}",
            spec.min_len, spec.max_len
        )));
    }
    for t in &spec.insertion_tokens {
        if (0..spec.alphabet_size).any(|k| target_symbol(k) == *t) {
            return Err(Error::Config(format!("insertion token `{t}` collides with a content translation")));
        }
        if t.is_empty() || t.chars().any(char::is_whitespace) || t.to_lowercase() != *t {
            return Err(Error::Config(format!("insertion token `{t}` must be a lowercase word")));
        }
    }
    Ok(())
}

pub fn generate_toy_corpus(spec: &SyntheticTaskSpec) -> Result<ToyCorpus> {
    let mut task = ToyTask::new(spec.clone())?;
    Ok(task.sample(spec.size))
}

/// Train/dev/test draws from one task instance, so all three share the insertion rule.
#[derive(Clone, Debug)]
pub struct ToySplits {
    pub train: ToyCorpus,
    pub dev: ToyCorpus,
    pub test: ToyCorpus,
}

pub fn generate_toy_splits(spec: &SyntheticTaskSpec, dev: usize, test: usize) -> Result<ToySplits> {
    let mut task = ToyTask::new(spec.clone())?;
    Ok(ToySplits {
        train: task.sample(spec.size),
        dev: task.sample(dev),
        test: task.sample(test),
    })
}

pub fn write_labels(path: &Path, labels: &[Vec<AlignLabel>]) -> Result<()> {
    let mut out = String::new();
    for line in labels {
        let flags: Vec<String> = line.iter().map(|l| l.flag().to_string()).collect();
        out.push_str(&flags.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<Vec<AlignLabel>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            line.split_whitespace()
                .map(|f| {
                    AlignLabel::parse(f).ok_or_else(|| {
                        Error::Ingestion(format!("{}:{}: bad alignment flag `{f}`", path.display(), n + 1))
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(prob: f64, size: usize) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            insertion_prob: prob,
            size,
            ..Default::default()
        }
    }

    #[test]
    fn no_insertions_at_zero_probability() {
        let toy = generate_toy_corpus(&spec(0.0, 50)).unwrap();
        for ((s, t), l) in toy.corpus.pairs.iter().zip(&toy.labels) {
            assert_eq!(s.len(), t.len());
            assert!(l.iter().all(|&x| x == AlignLabel::Aligned));
        }
    }

    #[test]
    fn insertion_at_every_position_at_probability_one() {
        let toy = generate_toy_corpus(&spec(1.0, 50)).unwrap();
        for ((s, _), l) in toy.corpus.pairs.iter().zip(&toy.labels) {
            let inserted = l.iter().filter(|&&x| x == AlignLabel::Inserted).count();
            assert_eq!(inserted, s.len());
        }
    }

    #[test]
    fn empirical_rate_tracks_probability() {
        // ~7.5 positions per sentence, so 1,400 sentences give > 10⁴ positions
        let toy = generate_toy_corpus(&spec(0.25, 1400)).unwrap();
        let positions: usize = toy.corpus.pairs.iter().map(|p| p.0.len()).sum();
        assert!(positions >= 10_000);
        assert!((toy.insertion_rate() - 0.25).abs() < 0.02, "{}", toy.insertion_rate());
    }

    #[test]
    fn stripping_insertions_recovers_translation() {
        let toy = generate_toy_corpus(&spec(0.4, 100)).unwrap();
        for ((s, t), l) in toy.corpus.pairs.iter().zip(&toy.labels) {
            let kept: Vec<&String> = t
                .iter()
                .zip(l)
                .filter(|(_, &x)| x == AlignLabel::Aligned)
                .map(|(w, _)| w)
                .collect();
            let expect: Vec<String> = s.iter().map(|w| w.repeat(2)).collect();
            assert_eq!(kept.len(), expect.len());
            assert!(kept.iter().zip(&expect).all(|(a, b)| *a == b));
            assert!(s.len() >= 3 && s.len() <= 12);
        }
    }

    #[test]
    fn splits_share_rule_and_are_seeded() {
        let a = generate_toy_splits(&spec(0.25, 30), 10, 10).unwrap();
        let b = generate_toy_splits(&spec(0.25, 30), 10, 10).unwrap();
        assert_eq!(a.test, b.test);
        assert_ne!(a.train.corpus.pairs[..10], a.dev.corpus.pairs[..]);
    }

    #[test]
    fn rejects_colliding_insertion_token() {
        let mut s = spec(0.25, 10);
        s.insertion_tokens = vec!["bb".into()];
        assert!(generate_toy_corpus(&s).is_err());
        s.insertion_tokens = vec!["the".into()];
        s.insertion_prob = 1.5;
        assert!(generate_toy_corpus(&s).is_err());
    }

    #[test]
    fn label_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels");
        let labels = vec![vec![AlignLabel::Inserted, AlignLabel::Aligned], vec![AlignLabel::Aligned]];
        write_labels(&path, &labels).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "I A\nA\n");
        assert_eq!(read_labels(&path).unwrap(), labels);
    }
}
