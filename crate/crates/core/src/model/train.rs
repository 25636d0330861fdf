//! Mini-batch training with AdaDelta and dev-BLEU model selection.

use std::time::Instant;

use super::network::{Model, StepOptions};
use super::optim::{AdaDelta, DEFAULT_EPS, DEFAULT_RHO};
use crate::data::{batch_encoded, EncodedPair, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::corpus_bleu;
use crate::exec::{derive_seed, Exec};
use crate::layers::DropoutConfig;
use crate::numerics::{Gradients, Tape};
use crate::search::greedy_decode;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub rho: f64,
    pub eps: f64,
    /// Global gradient-norm cap applied to the batch-mean gradient.
    pub clip_norm: Option<f64>,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            clip_norm: Some(1.0),
            exec: Exec::Parallel,
        }
    }
}

/// Held-out sentences used to pick the best epoch.
#[derive(Clone, Copy, Debug)]
pub struct DevSet<'a> {
    pub sources: &'a [Vec<usize>],
    pub references: &'a [Sentence],
    pub tgt_vocab: &'a Vocabulary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean sentence loss over the epoch's training pairs.
    pub mean_loss: f64,
    /// Greedy-decode BLEU in `[0, 1]`.
    pub dev_bleu: Option<f64>,
    pub wall_secs: f64,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        let bleu = self
            .dev_bleu
            .map_or_else(|| "-".to_string(), |b| format!("{:.2}", 100.0 * b));
        format!(
            "epoch {}\tloss {:.6}\tdev_bleu {}\ttime {:.2}s",
            self.epoch, self.mean_loss, bleu, self.wall_secs
        )
    }
}

/// Optimizer state and progress carried between calls to [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub optimizer: AdaDelta,
    /// Number of completed epochs.
    pub epoch: usize,
    pub best_dev_bleu: Option<f64>,
}

impl TrainState {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Result<Self> {
        Ok(TrainState {
            optimizer: AdaDelta::new(&model.params, cfg.rho, cfg.eps)?,
            epoch: 0,
            best_dev_bleu: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Batch-mean loss of every update, in order.
    pub step_losses: Vec<f64>,
    /// Model and state at the best dev epoch (the last epoch without a dev set).
    pub best: (Model, TrainState),
}

/// Loss and parameter gradient of one sentence pair.
pub fn sentence_gradient(model: &Model, pair: &EncodedPair, dropout_seed: u64) -> Result<(f64, Gradients)> {
    let mut dropout = DropoutConfig::new(model.config.dropout_rate, dropout_seed)?.sampler();
    let mut tape = Tape::new(&model.params);
    let mut opts = StepOptions {
        dropout: Some(&mut dropout),
        ..Default::default()
    };
    let loss = model.sentence_loss(&mut tape, &pair.0, &pair.1, &mut opts)?;
    let mut grads = Gradients::zeros(&model.params);
    tape.backward_into(loss, &mut grads)?;
    Ok((tape.value(loss).item(), grads))
}

/// Summed loss and gradient over `pairs`. Per-sentence results are reduced in
/// input order, so the outcome does not depend on `exec`.
pub fn batch_gradient(model: &Model, pairs: &[&EncodedPair], seeds: &[u64], exec: Exec) -> Result<(f64, Gradients)> {
    let jobs: Vec<(&EncodedPair, u64)> = pairs.iter().copied().zip(seeds.iter().copied()).collect();
    let results = exec.map(&jobs, |(p, s)| sentence_gradient(model, p, *s));
    let mut total = Gradients::zeros(&model.params);
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.accumulate(&g);
    }
    Ok((loss, total))
}

/// Greedy-decode BLEU of `model` on `dev`.
pub fn dev_bleu(model: &Model, dev: &DevSet<'_>, exec: Exec) -> Result<f64> {
    let cap = |src: &Vec<usize>| model.config.max_len.min(2 * src.len() + 10);
    let hyps = exec
        .map(dev.sources, |src| greedy_decode(model, src, cap(src)))
        .into_iter()
        .map(|h| h.map(|h| dev.tgt_vocab.decode(&h.tokens)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<Vec<Sentence>> = dev.references.iter().map(|r| vec![r.clone()]).collect();
    Ok(corpus_bleu(&hyps, &refs)?.bleu)
}

/// Trains for `cfg.epochs` more epochs, continuing from `state`.
///
/// Each epoch shuffles with a seed derived from the model seed and epoch
/// number; dropout masks are seeded per sentence, so results are reproducible
/// and identical under sequential and parallel execution.
pub fn train(
    model: &mut Model,
    state: &mut TrainState,
    data: &[EncodedPair],
    dev: Option<&DevSet<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::domain("training corpus is empty"));
    }
    for (s, t) in data {
        model.check_lengths(s, t)?;
    }
    if let Some(d) = dev {
        if d.sources.len() != d.references.len() {
            return Err(Error::domain("dev sources and references differ in length"));
        }
    }
    let seed = model.config.seed;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let mut best = (model.clone(), state.clone());

    for _ in 0..cfg.epochs {
        let start = Instant::now();
        let epoch = state.epoch + 1;
        let batches = batch_encoded(data, cfg.batch_size, derive_seed(seed, &[epoch as u64]))?;
        let mut epoch_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let pairs: Vec<&EncodedPair> = batch.indices.iter().map(|&i| &data[i]).collect();
            let seeds: Vec<u64> = (0..pairs.len())
                .map(|i| derive_seed(seed, &[epoch as u64, b as u64, i as u64]))
                .collect();
            let (loss, mut grads) = batch_gradient(model, &pairs, &seeds, cfg.exec)?;
            let n = pairs.len() as f64;
            grads.scale(1.0 / n);
            if let Some(c) = cfg.clip_norm {
                grads.clip_norm(c);
            }
            state.optimizer.update(&mut model.params, &grads)?;
            epoch_loss += loss;
            step_losses.push(loss / n);
        }
        state.epoch = epoch;
        let bleu = dev.map(|d| dev_bleu(model, d, cfg.exec)).transpose()?;
        let improved = match (bleu, state.best_dev_bleu) {
            (Some(b), Some(prev)) => b > prev,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if bleu.is_some() && improved {
            state.best_dev_bleu = bleu;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: epoch_loss / data.len() as f64,
            dev_bleu: bleu,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", entry.to_line());
        log.push(entry);
        if improved {
            best = (model.clone(), state.clone());
        }
    }
    Ok(TrainOutcome { log, step_losses, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{Mode, ModelConfig};

    fn tiny(mode: Mode, dropout: f64) -> Model {
        Model::new(ModelConfig {
            mode,
            src_vocab: 10,
            tgt_vocab: 10,
            emb_dim: 6,
            hidden_dim: 8,
            dropout_rate: dropout,
            max_len: 10,
            seed: 5,
        })
        .unwrap()
    }

    fn data() -> Vec<EncodedPair> {
        vec![
            (vec![4, 5, 6], vec![6, 5, 4]),
            (vec![7, 8], vec![8, 7, 9]),
            (vec![9, 4, 4, 5], vec![5, 4]),
            (vec![6], vec![6, 6]),
            (vec![5, 7], vec![7]),
        ]
    }

    fn cfg(epochs: usize, batch_size: usize, exec: Exec) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size,
            exec,
            ..Default::default()
        }
    }

    #[test]
    fn single_sentence_loss_decreases() {
        let mut m = tiny(Mode::Adaptive, 0.0);
        let mut st = TrainState::new(&m, &cfg(8, 1, Exec::Sequential)).unwrap();
        let d = vec![data()[0].clone()];
        let out = train(&mut m, &mut st, &d, None, &cfg(8, 1, Exec::Sequential)).unwrap();
        assert_eq!(out.step_losses.len(), 8);
        for w in out.step_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", out.step_losses);
        }
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let mut m = tiny(Mode::Baseline, 0.2);
        let before = m.params.clone();
        let mut st = TrainState::new(&m, &cfg(0, 2, Exec::Sequential)).unwrap();
        let out = train(&mut m, &mut st, &data(), None, &cfg(0, 2, Exec::Sequential)).unwrap();
        assert_eq!(m.params, before);
        assert!(out.log.is_empty());
        assert_eq!(out.best.0.params, before);
    }

    fn strip(log: &[EpochLog]) -> Vec<(usize, u64, Option<u64>)> {
        log.iter()
            .map(|e| (e.epoch, e.mean_loss.to_bits(), e.dev_bleu.map(f64::to_bits)))
            .collect()
    }

    #[test]
    fn deterministic_across_runs_and_exec_modes() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f"]).unwrap();
        let refs: Vec<Sentence> = vec![vec!["c".into(), "b".into()], vec!["a".into()]];
        let sources = vec![vec![4, 5], vec![6]];
        let dev = DevSet {
            sources: &sources,
            references: &refs,
            tgt_vocab: &vocab,
        };
        let run = |exec| {
            let mut m = tiny(Mode::Adaptive, 0.3);
            let c = cfg(3, 2, exec);
            let mut st = TrainState::new(&m, &c).unwrap();
            let out = train(&mut m, &mut st, &data(), Some(&dev), &c).unwrap();
            (strip(&out.log), out.step_losses, m.params)
        };
        let a = run(Exec::Sequential);
        let b = run(Exec::Sequential);
        let c = run(Exec::Parallel);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.0.len(), 3);
    }

    #[test]
    fn resuming_matches_one_long_run() {
        let c2 = cfg(2, 2, Exec::Sequential);
        let mut m = tiny(Mode::Adaptive, 0.1);
        let mut st = TrainState::new(&m, &c2).unwrap();
        train(&mut m, &mut st, &data(), None, &cfg(1, 2, Exec::Sequential)).unwrap();
        train(&mut m, &mut st, &data(), None, &cfg(1, 2, Exec::Sequential)).unwrap();
        let mut m2 = tiny(Mode::Adaptive, 0.1);
        let mut st2 = TrainState::new(&m2, &c2).unwrap();
        train(&mut m2, &mut st2, &data(), None, &c2).unwrap();
        assert_eq!(m.params, m2.params);
        assert_eq!(st, st2);
    }

    #[test]
    fn rejects_empty_and_overlong_data() {
        let mut m = tiny(Mode::Baseline, 0.0);
        let c = cfg(1, 2, Exec::Sequential);
        let mut st = TrainState::new(&m, &c).unwrap();
        assert!(train(&mut m, &mut st, &[], None, &c).is_err());
        let long = vec![(vec![4; 11], vec![4])];
        assert!(train(&mut m, &mut st, &long, None, &c).is_err());
    }
}
