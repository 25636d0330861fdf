use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

/// Surface forms of the reserved ids, in id order.
pub const SPECIALS: [&str; 4] = ["<pad>", "UNK", "<s>", "</s>"];

/// Token ↔ id map. Ids `0..4` are the specials; regular tokens follow in rank order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from regular tokens in id order (specials are prepended).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: SPECIALS.iter().map(|s| s.to_string()).collect(),
            index: SPECIALS.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect(),
        };
        for t in tokens {
            let t = t.into();
            if v.index.contains_key(&t) {
                return Err(Error::Ingestion(format!("duplicate vocabulary token `{t}`")));
            }
            v.index.insert(t.clone(), v.tokens.len());
            v.tokens.push(t);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Regular (non-special) tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Lowercases and maps out-of-vocabulary tokens to `UNK`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.index
                    .get(t)
                    .or_else(|| self.index.get(&t.to_lowercase()))
                    .copied()
                    .unwrap_or(UNK)
            })
            .collect()
    }

    /// Maps ids back to tokens; unknown ids render as `UNK`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK]).to_string())
            .collect()
    }

    /// One regular token per line; the token on line `n` (1-based) has id `n + 3`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.regular_tokens().join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(text.lines().filter(|l| !l.is_empty()))
    }
}

/// Vocabulary with the share of running tokens it covers.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabBuild {
    pub vocab: Vocabulary,
    pub coverage: f64,
}

/// Keeps the `k` most frequent tokens; frequency ties go to the earlier first occurrence.
pub fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], k: usize) -> Result<VocabBuild> {
    if k == 0 {
        return Err(Error::domain("vocabulary size must be at least 1"));
    }
    // token -> (count, first occurrence)
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut total = 0usize;
    for tok in sentences.iter().flatten() {
        let t = tok.as_ref().to_lowercase();
        let next = counts.len();
        counts.entry(t).or_insert((0, next)).0 += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::domain("cannot build a vocabulary from an empty corpus"));
    }
    let mut ranked: Vec<(String, usize, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
        .map(|(t, (c, first))| (t, c, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(k);
    let covered: usize = ranked.iter().map(|r| r.1).sum();
    Ok(VocabBuild {
        vocab: Vocabulary::from_tokens(ranked.into_iter().map(|r| r.0))?,
        coverage: covered as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn top_k_with_coverage() {
        let b = build_vocab(&[sent("a a b")], 1).unwrap();
        assert_eq!(b.vocab.regular_tokens(), &["a".to_string()]);
        assert_eq!(b.vocab.len(), 5);
        assert!((b.coverage - 2.0 / 3.0).abs() < 1e-15);

        let all = build_vocab(&[sent("x y z"), sent("y")], 10).unwrap();
        assert_eq!(all.coverage, 1.0);
        assert_eq!(all.vocab.id("y"), Some(4));
        assert_eq!(all.vocab.id("x"), Some(5));
    }

    #[test]
    fn ties_follow_first_occurrence() {
        let b = build_vocab(&[sent("c b a"), sent("a b c")], 3).unwrap();
        assert_eq!(b.vocab.regular_tokens(), &["c", "b", "a"]);
    }

    #[test]
    fn coverage_matches_independent_count() {
        let corpus = vec![sent("the cat sat on the mat"), sent("The dog sat"), sent("a cat a dog a bird")];
        for k in 1..8 {
            let b = build_vocab(&corpus, k).unwrap();
            let tokens: Vec<String> = corpus.iter().flatten().map(|t| t.to_lowercase()).collect();
            let kept = tokens.iter().filter(|t| b.vocab.id(t).is_some()).count();
            assert!((b.coverage - kept as f64 / tokens.len() as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(build_vocab::<String>(&[], 3).is_err());
        assert!(build_vocab(&[sent("a")], 0).is_err());
    }

    #[test]
    fn encode_maps_unknown_and_lowercases() {
        let b = build_vocab(&[sent("the cat")], 5).unwrap();
        let v = &b.vocab;
        assert_eq!(v.encode(&["dog"]), vec![UNK]);
        assert_eq!(v.encode(&["The"]), v.encode(&["the"]));
        let ids = v.encode(&["the", "cat"]);
        assert_eq!(v.decode(&ids), sent("the cat"));
    }

    #[test]
    fn file_roundtrip_assigns_ids_after_specials() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::from_tokens(["x", "y"]).unwrap();
        v.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x\ny\n");
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("x"), Some(4));
    }
}
