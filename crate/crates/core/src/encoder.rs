//! Bidirectional GRU encoder producing one annotation per source word.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{EmbeddingTable, GruParams};
use crate::numerics::{NodeId, ParamStore, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    pub embedding: EmbeddingTable,
    pub forward: GruParams,
    pub backward: GruParams,
}

impl EncoderParams {
    pub fn register<R: Rng>(store: &mut ParamStore, vocab: usize, emb_dim: usize, dir_dim: usize, rng: &mut R) -> Result<Self> {
        let embedding = EmbeddingTable::register(store, "src.embedding", vocab, emb_dim, rng)?;
        let forward = GruParams::register(store, "encoder.forward", emb_dim, dir_dim, rng)?;
        let backward = GruParams::register(store, "encoder.backward", emb_dim, dir_dim, rng)?;
        Ok(EncoderParams {
            embedding,
            forward,
            backward,
        })
    }

    /// Width of one annotation row (both directions).
    pub fn annotation_dim(&self, store: &ParamStore) -> usize {
        2 * self.forward.hidden_dim(store)
    }
}

/// `J × 2n` matrix whose row `j` is `[forward_j; backward_j]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Annotations {
    pub h: NodeId,
    pub len: usize,
}

/// Runs both directions from zero states and stacks the per-position concatenations.
pub fn encode(tape: &mut Tape<'_>, p: &EncoderParams, src: &[usize]) -> Result<Annotations> {
    if src.is_empty() {
        return Err(Error::domain("cannot encode an empty source sentence"));
    }
    let store = tape.params();
    let n = p.forward.hidden_dim(store);
    let embedded = src
        .iter()
        .map(|&id| p.embedding.embed(tape, id))
        .collect::<Result<Vec<_>>>()?;

    let zero = tape.input(Tensor::zeros(n, 1));
    let mut fwd = Vec::with_capacity(src.len());
    let mut h = zero;
    for &x in &embedded {
        h = p.forward.step(tape, x, h)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; src.len()];
    let mut h = zero;
    for (j, &x) in embedded.iter().enumerate().rev() {
        h = p.backward.step(tape, x, h)?;
        bwd[j] = h;
    }
    let rows = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Annotations {
        h: tape.stack_rows(&rows)?,
        len: src.len(),
    })
}
