use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::ParallelCorpus;
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// A source/target id pair.
pub type EncodedPair = (Vec<usize>, Vec<usize>);

pub fn encode_corpus(corpus: &ParallelCorpus, src: &Vocabulary, tgt: &Vocabulary) -> Vec<EncodedPair> {
    corpus
        .pairs
        .iter()
        .map(|(s, t)| (src.encode(s), tgt.encode(t)))
        .collect()
}

/// Sentences padded with `PAD` to the longest in the batch; masks mark real tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Corpus index of each row.
    pub indices: Vec<usize>,
    pub src: Vec<Vec<usize>>,
    pub src_mask: Vec<Vec<bool>>,
    pub tgt: Vec<Vec<usize>>,
    pub tgt_mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unpadded source and target of row `i`.
    pub fn pair(&self, i: usize) -> EncodedPair {
        let strip = |ids: &[usize], mask: &[bool]| -> Vec<usize> {
            ids.iter().zip(mask).filter(|(_, &m)| m).map(|(&t, _)| t).collect()
        };
        (strip(&self.src[i], &self.src_mask[i]), strip(&self.tgt[i], &self.tgt_mask[i]))
    }
}

fn pad(rows: Vec<&Vec<usize>>) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    rows.into_iter()
        .map(|r| {
            let mut ids = r.clone();
            let mut mask = vec![true; r.len()];
            ids.resize(width, PAD);
            mask.resize(width, false);
            (ids, mask)
        })
        .unzip()
}

/// Seeded shuffle followed by fixed-size chunking (the last batch may be short).
pub fn batch_encoded(pairs: &[EncodedPair], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let (src, src_mask) = pad(chunk.iter().map(|&i| &pairs[i].0).collect());
            let (tgt, tgt_mask) = pad(chunk.iter().map(|&i| &pairs[i].1).collect());
            Batch {
                indices: chunk.to_vec(),
                src,
                src_mask,
                tgt,
                tgt_mask,
            }
        })
        .collect())
}

pub fn make_batches(
    corpus: &ParallelCorpus,
    vocabs: (&Vocabulary, &Vocabulary),
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    batch_encoded(&encode_corpus(corpus, vocabs.0, vocabs.1), batch_size, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<EncodedPair> {
        vec![
            (vec![4, 5], vec![4]),
            (vec![6], vec![5, 6, 7]),
            (vec![4, 4, 4], vec![8, 9]),
            (vec![7], vec![4]),
            (vec![5, 6], vec![6, 6]),
        ]
    }

    #[test]
    fn batch_size_one_has_no_padding() {
        for b in batch_encoded(&pairs(), 1, 3).unwrap() {
            assert!(b.src_mask[0].iter().all(|&m| m));
            assert!(b.tgt_mask[0].iter().all(|&m| m));
        }
    }

    #[test]
    fn masked_positions_hold_pad() {
        for b in batch_encoded(&pairs(), 3, 1).unwrap() {
            for (ids, mask) in b.src.iter().zip(&b.src_mask).chain(b.tgt.iter().zip(&b.tgt_mask)) {
                for (&t, &m) in ids.iter().zip(mask) {
                    assert!(m || t == PAD);
                }
            }
        }
    }

    #[test]
    fn batches_partition_the_corpus() {
        let p = pairs();
        let batches = batch_encoded(&p, 2, 9).unwrap();
        let mut seen: Vec<EncodedPair> = batches
            .iter()
            .flat_map(|b| (0..b.len()).map(move |i| b.pair(i)))
            .collect();
        let mut expect = p.clone();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
        assert!(batch_encoded(&p, 0, 0).is_err());
    }

    #[test]
    fn shuffle_is_seeded() {
        let a = batch_encoded(&pairs(), 2, 5).unwrap();
        let b = batch_encoded(&pairs(), 2, 5).unwrap();
        assert_eq!(a, b);
    }
}
