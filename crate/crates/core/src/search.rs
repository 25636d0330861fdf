//! Greedy and beam-search decoding with per-token sentinel-gate traces.

use std::cmp::Ordering;

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Model, StepOptions};
use crate::numerics::{NodeId, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, without the terminating `EOS`.
    pub tokens: Vec<usize>,
    /// Sum of the log-probabilities of every emitted step, `EOS` included.
    pub score: f64,
    /// Decoder state after the last step.
    pub state: Tensor,
    /// Sentinel gate per emitted token (empty for baseline models).
    pub betas: Vec<f64>,
    /// Whether the hypothesis ended with `EOS` rather than hitting the length cap.
    pub finished: bool,
}

impl Hypothesis {
    /// Number of scored steps: tokens plus the `EOS` step when present.
    pub fn steps(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn normalized_score(&self) -> f64 {
        self.score / self.steps().max(1) as f64
    }
}

/// Highest entry; ties go to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn inference_opts() -> StepOptions<'static> {
    StepOptions::default()
}

pub fn greedy_decode(model: &Model, src: &[usize], max_len: usize) -> Result<Hypothesis> {
    let mut tape = Tape::new(&model.params);
    let ctx = model.encode_source(&mut tape, src)?;
    let mut opts = inference_opts();
    let mut state = ctx.t0;
    let mut prev = BOS;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        state: Tensor::zeros(0, 0),
        betas: Vec::new(),
        finished: false,
    };
    while hyp.tokens.len() < max_len {
        let step = model.decode_step(&mut tape, &ctx, prev, state, &mut opts)?;
        let lp = tape.value(step.log_probs).data();
        let w = argmax(lp);
        hyp.score += lp[w];
        state = step.state;
        if w == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(w);
        if let Some(b) = step.beta {
            hyp.betas.push(tape.value(b).item());
        }
        prev = w;
    }
    hyp.state = tape.value(state).clone();
    Ok(hyp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub best: Hypothesis,
    /// Every completed hypothesis, best first by length-normalized score.
    pub nbest: Vec<Hypothesis>,
}

struct Live {
    tokens: Vec<usize>,
    score: f64,
    state: NodeId,
    betas: Vec<f64>,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.normalized_score()
        .total_cmp(&a.normalized_score())
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search. Hypotheses that emit `EOS` leave the beam for a finished pool
/// and shrink the live width; at `max_len` tokens the remaining live ones are
/// closed unfinished. Candidates are ordered by score, then by token sequence.
pub fn beam_search(model: &Model, src: &[usize], beam: usize, max_len: usize) -> Result<BeamOutput> {
    if beam == 0 {
        return Err(Error::domain("beam size must be at least 1"));
    }
    let mut tape = Tape::new(&model.params);
    let ctx = model.encode_source(&mut tape, src)?;
    let mut opts = inference_opts();
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        state: ctx.t0,
        betas: Vec::new(),
    }];

    let close = |tape: &Tape<'_>, h: Live, done: bool| Hypothesis {
        state: tape.value(h.state).clone(),
        tokens: h.tokens,
        score: h.score,
        betas: h.betas,
        finished: done,
    };

    if max_len == 0 {
        finished.extend(live.drain(..).map(|h| close(&tape, h, false)));
    }
    while !live.is_empty() {
        let width = beam.saturating_sub(finished.len());
        if width == 0 {
            break;
        }
        // (score, parent, token, step)
        let mut cands: Vec<(f64, usize, usize, usize)> = Vec::new();
        let mut steps = Vec::with_capacity(live.len());
        for (hi, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let step = model.decode_step(&mut tape, &ctx, prev, h.state, &mut opts)?;
            let lp = tape.value(step.log_probs).data();
            cands.extend(lp.iter().enumerate().map(|(w, &l)| (h.score + l, hi, w, steps.len())));
            steps.push(step);
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::with_capacity(width);
        for &(score, hi, w, si) in cands.iter().take(width) {
            let parent = &live[hi];
            let step = &steps[si];
            if w == EOS {
                finished.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    score,
                    state: tape.value(step.state).clone(),
                    betas: parent.betas.clone(),
                    finished: true,
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(w);
                let mut betas = parent.betas.clone();
                if let Some(b) = step.beta {
                    betas.push(tape.value(b).item());
                }
                next.push(Live {
                    tokens,
                    score,
                    state: step.state,
                    betas,
                });
            }
        }
        live = next;
        if live.first().is_some_and(|h| h.tokens.len() >= max_len) {
            finished.extend(live.drain(..).map(|h| close(&tape, h, false)));
        }
    }

    finished.sort_by(rank);
    let best = finished
        .first()
        .cloned()
        .ok_or_else(|| Error::domain("beam search produced no hypothesis"))?;
    Ok(BeamOutput { best, nbest: finished })
}

/// Decodes many sentences (greedy when `beam == 1`), preserving input order.
pub fn translate_all(model: &Model, sources: &[Vec<usize>], beam: usize, max_len: usize, exec: Exec) -> Result<Vec<Hypothesis>> {
    exec.map(sources, |src| {
        if beam == 1 {
            greedy_decode(model, src, max_len)
        } else {
            beam_search(model, src, beam, max_len).map(|o| o.best)
        }
    })
    .into_iter()
    .collect()
}
