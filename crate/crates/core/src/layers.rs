//! Embeddings, affine maps, the GRU cell and output-layer dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor};

/// Half-width of the uniform initializer used for every weight matrix.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub table: ParamId,
}

impl EmbeddingTable {
    pub fn register<R: Rng>(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(EmbeddingTable {
            table: store.register_uniform(name, vocab, dim, INIT_SCALE, rng)?,
        })
    }

    pub fn vocab_size(&self, store: &ParamStore) -> usize {
        store.get(self.table).rows()
    }

    pub fn dim(&self, store: &ParamStore) -> usize {
        store.get(self.table).cols()
    }

    pub fn embed(&self, tape: &mut Tape<'_>, id: usize) -> Result<NodeId> {
        tape.embed_row(self.table, id)
    }
}

/// `W x (+ b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearParams {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl LinearParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register_uniform(name, output, input, INIT_SCALE, rng)?;
        let bias = if bias {
            Some(store.register_zeros(format!("{name}.bias"), output, 1)?)
        } else {
            None
        };
        Ok(LinearParams { weight, bias })
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId> {
        let w = tape.param(self.weight);
        let y = tape.matmul(w, x)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Gated recurrent unit with update gate `z`, reset gate `r` and candidate `h̃`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut gate = |g: &str| -> Result<(ParamId, ParamId, ParamId)> {
            Ok((
                store.register_uniform(format!("{prefix}.W_{g}"), hidden, input, INIT_SCALE, rng)?,
                store.register_uniform(format!("{prefix}.U_{g}"), hidden, hidden, INIT_SCALE, rng)?,
                store.register_zeros(format!("{prefix}.b_{g}"), hidden, 1)?,
            ))
        };
        let (w_z, u_z, b_z) = gate("z")?;
        let (w_r, u_r, b_r) = gate("r")?;
        let (w_h, u_h, b_h) = gate("h")?;
        Ok(GruParams {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        })
    }

    pub fn hidden_dim(&self, store: &ParamStore) -> usize {
        store.get(self.u_z).rows()
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w_z).cols()
    }

    fn affine(tape: &mut Tape<'_>, w: ParamId, x: NodeId, u: ParamId, h: NodeId, b: ParamId) -> Result<NodeId> {
        let w = tape.param(w);
        let u = tape.param(u);
        let b = tape.param(b);
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h)?;
        tape.add_n(&[wx, uh, b])
    }

    /// One recurrence step: `h = (1 - z) ⊙ h_prev + z ⊙ h̃`.
    pub fn step(&self, tape: &mut Tape<'_>, x: NodeId, h_prev: NodeId) -> Result<NodeId> {
        let z = Self::affine(tape, self.w_z, x, self.u_z, h_prev, self.b_z)?;
        let z = tape.sigmoid(z);
        let r = Self::affine(tape, self.w_r, x, self.u_r, h_prev, self.b_r)?;
        let r = tape.sigmoid(r);
        let rh = tape.hadamard(r, h_prev)?;
        let cand = Self::affine(tape, self.w_h, x, self.u_h, rh, self.b_h)?;
        let cand = tape.tanh(cand);
        let delta = tape.sub(cand, h_prev)?;
        let gated = tape.hadamard(z, delta)?;
        tape.add(h_prev, gated)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutConfig {
    pub rate: f64,
    pub seed: u64,
}

impl DropoutConfig {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(DropoutConfig { rate, seed })
    }

    pub fn sampler(&self) -> Dropout {
        Dropout {
            rate: self.rate,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at training time.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn apply(&mut self, tape: &mut Tape<'_>, x: NodeId, training: bool) -> Result<NodeId> {
        if !training || self.rate == 0.0 {
            return Ok(x);
        }
        let (rows, cols) = tape.shape(x);
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let mask = tape.input(Tensor::from_vec(rows, cols, mask)?);
        tape.hadamard(x, mask)
    }
}
