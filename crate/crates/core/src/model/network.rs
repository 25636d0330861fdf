use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Mode, ModelConfig};
use crate::attention::{
    adaptive_attend, align_scores, attend, project_annotations, sentinel_state, AttentionParams,
    ProjectedAnnotations, SentinelParams, SentinelScore,
};
use crate::data::{BOS, EOS};
use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::layers::{Dropout, EmbeddingTable, GruParams, LinearParams};
use crate::numerics::{NodeId, ParamStore, Tape, Tensor};

/// Handles to every learnable tensor of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub encoder: EncoderParams,
    pub tgt_embedding: EmbeddingTable,
    pub decoder: GruParams,
    pub attention: AttentionParams,
    /// `W_init`: maps the mean annotation to the first decoder state.
    pub init: LinearParams,
    /// `W_p`: prediction layer.
    pub output: LinearParams,
    /// Present in adaptive mode only.
    pub sentinel: Option<SentinelParams>,
}

impl ParamLayout {
    /// Registers all parameters in a fixed order. Baseline parameters come first,
    /// so both modes built from one seed share identical values for them.
    pub fn register(cfg: &ModelConfig, store: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.hidden_dim;
        let annot = 2 * cfg.encoder_dim();
        let encoder = EncoderParams::register(store, cfg.src_vocab, cfg.emb_dim, cfg.encoder_dim(), &mut rng)?;
        let tgt_embedding = EmbeddingTable::register(store, "tgt.embedding", cfg.tgt_vocab, cfg.emb_dim, &mut rng)?;
        let decoder = GruParams::register(store, "decoder", cfg.emb_dim + annot, n, &mut rng)?;
        let attention = AttentionParams::register(store, n, annot, n, &mut rng)?;
        let init = LinearParams::register(store, "decoder.W_init", annot, n, true, &mut rng)?;
        let output = LinearParams::register(store, "output.W_p", n, cfg.tgt_vocab, true, &mut rng)?;
        let sentinel = match cfg.mode {
            Mode::Adaptive => Some(SentinelParams::register(store, cfg.emb_dim + annot, n, annot, n, &mut rng)?),
            Mode::Baseline => None,
        };
        Ok(ParamLayout {
            encoder,
            tgt_embedding,
            decoder,
            attention,
            init,
            output,
            sentinel,
        })
    }
}

/// Encoder output for one sentence plus the initial decoder state.
#[derive(Clone, Copy, Debug)]
pub struct SourceContext {
    pub annotations: ProjectedAnnotations,
    pub t0: NodeId,
}

/// Tape nodes produced by one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct StepNodes {
    pub log_probs: NodeId,
    pub state: NodeId,
    /// `α` (length `J`) in baseline mode, `α̂` (length `J + 1`) in adaptive mode.
    pub weights: NodeId,
    pub beta: Option<NodeId>,
}

/// Plain values of one decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub log_probs: Vec<f64>,
    pub beta: Option<f64>,
    pub weights: Vec<f64>,
}

impl StepTrace {
    pub fn from_nodes(tape: &Tape<'_>, nodes: &StepNodes) -> Self {
        StepTrace {
            log_probs: tape.value(nodes.log_probs).data().to_vec(),
            beta: nodes.beta.map(|b| tape.value(b).item()),
            weights: tape.value(nodes.weights).data().to_vec(),
        }
    }
}

/// Per-step knobs that differ between training, inference and tests.
#[derive(Debug, Default)]
pub struct StepOptions<'d> {
    /// Output-layer dropout; `None` at inference.
    pub dropout: Option<&'d mut Dropout>,
    pub sentinel_score: SentinelScore,
}

/// A model: configuration, parameter values and the handles into them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub layout: ParamLayout,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let layout = ParamLayout::register(&config, &mut params)?;
        Ok(Model { config, params, layout })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// `t_0 = tanh(W_init · mean_j h_j)`
    pub fn init_decoder_state(&self, tape: &mut Tape<'_>, h: NodeId) -> Result<NodeId> {
        let (j, _) = tape.shape(h);
        if j == 0 {
            return Err(Error::domain("no annotations to initialise the decoder from"));
        }
        let weights = tape.input(Tensor::filled(j, 1, 1.0 / j as f64));
        let mean = tape.matmul_t(h, weights, true, false)?;
        let pre = self.layout.init.apply(tape, mean)?;
        Ok(tape.tanh(pre))
    }

    pub fn encode_source(&self, tape: &mut Tape<'_>, src: &[usize]) -> Result<SourceContext> {
        let ann = encode(tape, &self.layout.encoder, src)?;
        let annotations = project_annotations(tape, &self.layout.attention, ann)?;
        let t0 = self.init_decoder_state(tape, ann.h)?;
        Ok(SourceContext { annotations, t0 })
    }

    /// One decoder step from previous token `y_prev` and state `t_prev`.
    ///
    /// Alignment uses `t_prev`; the GRU consumes `[emb(y_prev); c]`; prediction
    /// is `softmax(W_p · dropout(c + t_i))`, with `c⁺` in place of `c` in
    /// adaptive mode.
    pub fn decode_step(
        &self,
        tape: &mut Tape<'_>,
        ctx: &SourceContext,
        y_prev: usize,
        t_prev: NodeId,
        opts: &mut StepOptions<'_>,
    ) -> Result<StepNodes> {
        let l = &self.layout;
        let ann = ctx.annotations.annotations;
        let e = align_scores(tape, &l.attention, t_prev, &ctx.annotations)?;
        let att = attend(tape, e, ann)?;
        let emb = l.tgt_embedding.embed(tape, y_prev)?;
        let x = tape.concat(&[emb, att.c])?;
        let t_i = l.decoder.step(tape, x, t_prev)?;

        let (context, weights, beta) = match &l.sentinel {
            None => (att.c, att.alpha, None),
            Some(sp) => {
                let sent = sentinel_state(tape, sp, x, t_prev, t_i)?;
                let ad = adaptive_attend(tape, sp, &att, sent.s, t_prev, opts.sentinel_score)?;
                (ad.c_plus, ad.alpha_hat, Some(ad.beta))
            }
        };
        let mut out = tape.add(context, t_i)?;
        if let Some(d) = opts.dropout.as_deref_mut() {
            out = d.apply(tape, out, true)?;
        }
        let logits = l.output.apply(tape, out)?;
        let log_probs = tape.log_softmax(logits)?;
        Ok(StepNodes {
            log_probs,
            state: t_i,
            weights,
            beta,
        })
    }

    pub(crate) fn check_lengths(&self, src: &[usize], tgt: &[usize]) -> Result<()> {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::domain("source and target must be non-empty"));
        }
        let max = self.config.max_len;
        if src.len() > max || tgt.len() > max {
            return Err(Error::domain(format!(
                "sentence pair of lengths ({}, {}) exceeds max_len {max}",
                src.len(),
                tgt.len()
            )));
        }
        Ok(())
    }

    /// Teacher-forced decode of `tgt` (inputs `[BOS, y..]`, outputs `[y.., EOS]`).
    pub fn teacher_forced(
        &self,
        tape: &mut Tape<'_>,
        src: &[usize],
        tgt: &[usize],
        opts: &mut StepOptions<'_>,
    ) -> Result<Vec<StepNodes>> {
        self.check_lengths(src, tgt)?;
        let ctx = self.encode_source(tape, src)?;
        let mut t = ctx.t0;
        let mut prev = BOS;
        let mut steps = Vec::with_capacity(tgt.len() + 1);
        for &y in tgt.iter().chain(std::iter::once(&EOS)) {
            let step = self.decode_step(tape, &ctx, prev, t, opts)?;
            t = step.state;
            prev = y;
            steps.push(step);
        }
        Ok(steps)
    }

    /// Negative log-likelihood of `tgt` followed by `EOS`.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape<'_>,
        src: &[usize],
        tgt: &[usize],
        opts: &mut StepOptions<'_>,
    ) -> Result<NodeId> {
        let steps = self.teacher_forced(tape, src, tgt, opts)?;
        let picks = steps
            .iter()
            .zip(tgt.iter().chain(std::iter::once(&EOS)))
            .map(|(s, &y)| tape.pick(s.log_probs, y))
            .collect::<Result<Vec<_>>>()?;
        let total = tape.add_n(&picks)?;
        Ok(tape.scale(total, -1.0))
    }

    /// Plain-value variant of [`Model::teacher_forced`] for analysis.
    pub fn forced_traces(&self, src: &[usize], tgt: &[usize], score: SentinelScore) -> Result<Vec<StepTrace>> {
        let mut tape = Tape::new(&self.params);
        let mut opts = StepOptions {
            dropout: None,
            sentinel_score: score,
        };
        let steps = self.teacher_forced(&mut tape, src, tgt, &mut opts)?;
        Ok(steps.iter().map(|s| StepTrace::from_nodes(&tape, s)).collect())
    }

    /// Copies every tensor whose name also exists in `other`.
    pub fn copy_shared_from(&mut self, other: &Model) -> usize {
        let mut copied = 0;
        for (_, name, t) in other.params.iter() {
            if let Some(mine) = self.params.id(name) {
                if self.params.get(mine).shape() == t.shape() {
                    *self.params.get_mut(mine) = t.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}
