//! Additive attention over source annotations and its adaptive extension.
//!
//! The adaptive variant appends one extra score for an *attention sentinel*, a
//! vector derived from the decoder state. After a joint softmax over the `J`
//! source scores plus the sentinel score, the last weight is the sentinel gate
//! `β`, and the context handed to the prediction layer becomes
//! `c⁺ = β·s̃ + (1 - β)·c`.
//!
//! Because `(1 - β)·softmax(e)_j` equals the joint weight of source position
//! `j`, `c⁺` can equivalently be written as `Σ_j α̂_j h_j + β·s̃`. Pinning the
//! sentinel score to `-∞` gives `β = 0` and recovers plain attention exactly.

use rand::Rng;

use crate::encoder::Annotations;
use crate::error::{Error, Result};
use crate::layers::{LinearParams, INIT_SCALE};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor};

/// `e_j = V_aᵀ tanh(W_a t_prev + U_a h_j)`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub w_a: ParamId,
    pub u_a: ParamId,
    pub v_a: ParamId,
}

impl AttentionParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        state_dim: usize,
        annotation_dim: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AttentionParams {
            w_a: store.register_uniform("attention.W_a", attention_dim, state_dim, INIT_SCALE, rng)?,
            u_a: store.register_uniform("attention.U_a", attention_dim, annotation_dim, INIT_SCALE, rng)?,
            v_a: store.register_uniform("attention.V_a", attention_dim, 1, INIT_SCALE, rng)?,
        })
    }
}

/// Annotations together with `U_a h_j` for every `j`, computed once per sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectedAnnotations {
    pub annotations: Annotations,
    /// `J × attention_dim`
    pub projected: NodeId,
}

pub fn project_annotations(tape: &mut Tape<'_>, p: &AttentionParams, h: Annotations) -> Result<ProjectedAnnotations> {
    let u_a = tape.param(p.u_a);
    let projected = tape.matmul_t(h.h, u_a, false, true)?;
    Ok(ProjectedAnnotations {
        annotations: h,
        projected,
    })
}

/// Raw alignment scores `e` (length `J`) for the previous decoder state.
pub fn align_scores(tape: &mut Tape<'_>, p: &AttentionParams, t_prev: NodeId, h: &ProjectedAnnotations) -> Result<NodeId> {
    let w_a = tape.param(p.w_a);
    let wt = tape.matmul(w_a, t_prev)?;
    let pre = tape.add_row_broadcast(h.projected, wt)?;
    let act = tape.tanh(pre);
    let v_a = tape.param(p.v_a);
    tape.matmul(act, v_a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionOutput {
    /// Context `Σ_j α_j h_j`, width of one annotation.
    pub c: NodeId,
    pub alpha: NodeId,
    pub e: NodeId,
}

pub fn attend(tape: &mut Tape<'_>, e: NodeId, h: Annotations) -> Result<AttentionOutput> {
    let (rows, cols) = tape.shape(e);
    if (rows, cols) != (h.len, 1) {
        return Err(Error::dim("attend", (rows, cols), (h.len, 1)));
    }
    let alpha = tape.softmax(e)?;
    let c = tape.matmul_t(h.h, alpha, true, false)?;
    Ok(AttentionOutput { c, alpha, e })
}

/// Parameters of the attention sentinel and of its score.
///
/// `w_s_state` projects the current decoder state into the sentinel;
/// `w_s_score`, `u_g` and `w_h` produce the sentinel's alignment score.
/// `lift` maps the sentinel to annotation width when the two differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentinelParams {
    pub w_x: ParamId,
    pub w_t: ParamId,
    pub w_s_state: ParamId,
    pub w_s_score: ParamId,
    pub u_g: ParamId,
    pub w_h: ParamId,
    pub lift: Option<LinearParams>,
}

impl SentinelParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        input_dim: usize,
        state_dim: usize,
        annotation_dim: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_x = store.register_uniform("sentinel.W_x", state_dim, input_dim, INIT_SCALE, rng)?;
        let w_t = store.register_uniform("sentinel.W_t", state_dim, state_dim, INIT_SCALE, rng)?;
        let w_s_state = store.register_uniform("sentinel.W_s_state", state_dim, state_dim, INIT_SCALE, rng)?;
        let w_s_score = store.register_uniform("sentinel.W_s_score", attention_dim, state_dim, INIT_SCALE, rng)?;
        let u_g = store.register_uniform("sentinel.U_g", attention_dim, state_dim, INIT_SCALE, rng)?;
        let w_h = store.register_uniform("sentinel.W_h", attention_dim, 1, INIT_SCALE, rng)?;
        let lift = if state_dim != annotation_dim {
            Some(LinearParams::register(store, "sentinel.lift", state_dim, annotation_dim, false, rng)?)
        } else {
            None
        };
        Ok(SentinelParams {
            w_x,
            w_t,
            w_s_state,
            w_s_score,
            u_g,
            w_h,
            lift,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentinelState {
    pub gate: NodeId,
    pub s: NodeId,
}

/// `g = σ(W_x x_i + W_t t_prev)`, `s = g ⊙ tanh(W_s t_i)`.
pub fn sentinel_state(
    tape: &mut Tape<'_>,
    p: &SentinelParams,
    x_i: NodeId,
    t_prev: NodeId,
    t_i: NodeId,
) -> Result<SentinelState> {
    let w_x = tape.param(p.w_x);
    let w_t = tape.param(p.w_t);
    let wx = tape.matmul(w_x, x_i)?;
    let wt = tape.matmul(w_t, t_prev)?;
    let pre = tape.add(wx, wt)?;
    let gate = tape.sigmoid(pre);
    let w_s = tape.param(p.w_s_state);
    let proj = tape.matmul(w_s, t_i)?;
    let act = tape.tanh(proj);
    let s = tape.hadamard(gate, act)?;
    Ok(SentinelState { gate, s })
}

/// Source of the sentinel's alignment score.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SentinelScore {
    #[default]
    Learned,
    /// Pin the score to a constant; `f64::NEG_INFINITY` closes the gate exactly.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdaptiveOutput {
    pub c_plus: NodeId,
    /// `J + 1` joint weights; the last one is `beta`.
    pub alpha_hat: NodeId,
    pub beta: NodeId,
    pub s: NodeId,
    /// Sentinel at annotation width.
    pub s_lifted: NodeId,
    /// Sentinel alignment score appended to `e`.
    pub score: NodeId,
}

/// Sentinel score `z = W_hᵀ tanh(W_s s + U_g t_prev)`.
pub fn sentinel_score(tape: &mut Tape<'_>, p: &SentinelParams, s: NodeId, t_prev: NodeId) -> Result<NodeId> {
    let w_s = tape.param(p.w_s_score);
    let u_g = tape.param(p.u_g);
    let a = tape.matmul(w_s, s)?;
    let b = tape.matmul(u_g, t_prev)?;
    let pre = tape.add(a, b)?;
    let act = tape.tanh(pre);
    let w_h = tape.param(p.w_h);
    tape.matmul_t(w_h, act, true, false)
}

pub fn adaptive_attend(
    tape: &mut Tape<'_>,
    p: &SentinelParams,
    base: &AttentionOutput,
    s: NodeId,
    t_prev: NodeId,
    score: SentinelScore,
) -> Result<AdaptiveOutput> {
    let j = tape.shape(base.e).0;
    let score = match score {
        SentinelScore::Learned => sentinel_score(tape, p, s, t_prev)?,
        SentinelScore::Fixed(v) => tape.input(Tensor::scalar(v)),
    };
    let e_hat = tape.concat(&[base.e, score])?;
    let alpha_hat = tape.softmax(e_hat)?;
    let beta = tape.pick(alpha_hat, j)?;

    let s_lifted = match p.lift {
        Some(lift) => lift.apply(tape, s)?,
        None => s,
    };
    let (sw, cw) = (tape.shape(s_lifted), tape.shape(base.c));
    if sw != cw {
        return Err(Error::dim("adaptive_attend", sw, cw));
    }
    // c + β (s̃ - c)
    let diff = tape.sub(s_lifted, base.c)?;
    let mix = tape.scale_by(diff, beta)?;
    let c_plus = tape.add(base.c, mix)?;
    Ok(AdaptiveOutput {
        c_plus,
        alpha_hat,
        beta,
        s,
        s_lifted,
        score,
    })
}

#[cfg(test)]
mod tests;
