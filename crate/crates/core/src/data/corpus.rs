use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type Sentence = Vec<String>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Sentence, Sentence)>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.0.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.1.clone()).collect()
    }

    /// Writes both sides as aligned one-sentence-per-line files.
    pub fn save(&self, src: &Path, tgt: &Path) -> Result<()> {
        write_sentences(src, self.pairs.iter().map(|p| &p.0))?;
        write_sentences(tgt, self.pairs.iter().map(|p| &p.1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub corpus: ParallelCorpus,
    pub dropped_too_long: usize,
    pub dropped_empty: usize,
}

/// Lowercased whitespace tokenization.
pub fn tokenize(line: &str) -> Sentence {
    line.split_whitespace().map(str::to_lowercase).collect()
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn write_sentences<'a, I>(path: &Path, sentences: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads aligned files, dropping pairs with an empty side or a side longer than `max_len`.
pub fn load_parallel(src: &Path, tgt: &Path, max_len: usize) -> Result<LoadedCorpus> {
    let s = read_sentences(src)?;
    let t = read_sentences(tgt)?;
    if s.len() != t.len() {
        return Err(Error::Ingestion(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    let mut loaded = LoadedCorpus {
        corpus: ParallelCorpus::default(),
        dropped_too_long: 0,
        dropped_empty: 0,
    };
    for (line, (a, b)) in s.into_iter().zip(t).enumerate() {
        if a.is_empty() || b.is_empty() {
            log::warn!("line {}: empty sentence, pair dropped", line + 1);
            loaded.dropped_empty += 1;
        } else if a.len() > max_len || b.len() > max_len {
            loaded.dropped_too_long += 1;
        } else {
            loaded.corpus.pairs.push((a, b));
        }
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn keeps_pairs_within_limit() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s", "a b\nc\n");
        let t = write(dir.path(), "t", "A B\nC D\n");
        let l = load_parallel(&s, &t, 50).unwrap();
        assert_eq!(l.corpus.len(), 2);
        assert_eq!(l.dropped_too_long + l.dropped_empty, 0);
        assert_eq!(l.corpus.pairs[0].1, vec!["a", "b"]);
    }

    #[test]
    fn drops_overlong_and_empty_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let long = vec!["w"; 51].join(" ");
        let ok = vec!["w"; 50].join(" ");
        let s = write(dir.path(), "s", &format!("{long}\n{ok}\n\nx\n"));
        let t = write(dir.path(), "t", "y\ny\ny\n\n");
        let l = load_parallel(&s, &t, 50).unwrap();
        assert_eq!(l.corpus.len(), 1);
        assert_eq!(l.dropped_too_long, 1);
        assert_eq!(l.dropped_empty, 2);
    }

    #[test]
    fn line_count_mismatch_names_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s", "a\nb\n");
        let t = write(dir.path(), "t", "a\n");
        let err = load_parallel(&s, &t, 50).unwrap_err().to_string();
        assert!(err.contains("2") && err.contains("1"), "{err}");
    }
}
