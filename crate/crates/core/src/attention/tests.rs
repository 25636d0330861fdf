use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{grad_check, GradCheckOptions};

const STATE: usize = 4;
const ANNOT: usize = 4;
const ATT: usize = 3;
const INPUT: usize = 6;

struct Fixture {
    store: ParamStore,
    att: AttentionParams,
    sent: SentinelParams,
    h: Tensor,
    t_prev: Tensor,
    t_i: Tensor,
    x: Tensor,
}

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn fixture(seed: u64, j: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let att = AttentionParams::register(&mut store, STATE, ANNOT, ATT, &mut rng).unwrap();
    let sent = SentinelParams::register(&mut store, INPUT, STATE, ANNOT, ATT, &mut rng).unwrap();
    // spread the weights out so scores are far from uniform
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    Fixture {
        store,
        att,
        sent,
        h: rand_tensor(&mut rng, j, ANNOT, 1.0),
        t_prev: rand_tensor(&mut rng, STATE, 1, 1.0),
        t_i: rand_tensor(&mut rng, STATE, 1, 1.0),
        x: rand_tensor(&mut rng, INPUT, 1, 1.0),
    }
}

struct Nodes {
    base: AttentionOutput,
    sentinel: SentinelState,
    adaptive: AdaptiveOutput,
}

fn run(tape: &mut Tape<'_>, f: &Fixture, score: SentinelScore) -> Result<Nodes> {
    let h = tape.input(f.h.clone());
    let ann = Annotations { h, len: f.h.rows() };
    let t_prev = tape.input(f.t_prev.clone());
    let t_i = tape.input(f.t_i.clone());
    let x = tape.input(f.x.clone());
    let proj = project_annotations(tape, &f.att, ann)?;
    let e = align_scores(tape, &f.att, t_prev, &proj)?;
    let base = attend(tape, e, ann)?;
    let sentinel = sentinel_state(tape, &f.sent, x, t_prev, t_i)?;
    let adaptive = adaptive_attend(tape, &f.sent, &base, sentinel.s, t_prev, score)?;
    Ok(Nodes {
        base,
        sentinel,
        adaptive,
    })
}

// Independent plain-loop evaluation of the alignment score and sentinel.
fn mat_vec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn hand_score(f: &Fixture, j: usize) -> f64 {
    let s = &f.store;
    let wt = mat_vec(s.get(f.att.w_a), f.t_prev.data());
    let uh = mat_vec(s.get(f.att.u_a), f.h.row(j));
    let v = s.get(f.att.v_a).data();
    (0..ATT).map(|k| v[k] * (wt[k] + uh[k]).tanh()).sum()
}

fn hand_sentinel(f: &Fixture) -> Vec<f64> {
    let s = &f.store;
    let a = mat_vec(s.get(f.sent.w_x), f.x.data());
    let b = mat_vec(s.get(f.sent.w_t), f.t_prev.data());
    let c = mat_vec(s.get(f.sent.w_s_state), f.t_i.data());
    (0..STATE)
        .map(|k| 1.0 / (1.0 + (-(a[k] + b[k])).exp()) * c[k].tanh())
        .collect()
}

#[test]
fn zero_v_a_gives_zero_scores() {
    let mut f = fixture(1, 5);
    f.store.get_mut(f.att.v_a).fill(0.0);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    assert!(tape.value(n.base.e).data().iter().all(|&v| v == 0.0));
    let alpha = tape.value(n.base.alpha).data();
    assert!(alpha.iter().all(|&a| (a - 0.2).abs() < 1e-15));
}

#[test]
fn single_position_matches_hand_evaluation() {
    let f = fixture(2, 1);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    let e = tape.value(n.base.e).item();
    assert!((e - hand_score(&f, 0)).abs() < 1e-14);
    assert_eq!(tape.value(n.base.alpha).data(), &[1.0]);
    assert_eq!(tape.value(n.base.c).data(), f.h.row(0));
}

#[test]
fn uniform_scores_average_rows() {
    let f = fixture(3, 3);
    let mut tape = Tape::new(&f.store);
    let h = tape.input(f.h.clone());
    let e = tape.input(Tensor::filled(3, 1, 0.7));
    let out = attend(&mut tape, e, Annotations { h, len: 3 }).unwrap();
    let c = tape.value(out.c).data();
    for k in 0..ANNOT {
        let mean = (f.h.get(0, k) + f.h.get(1, k) + f.h.get(2, k)) / 3.0;
        assert!((c[k] - mean).abs() < 1e-15);
    }
    let bad = tape.input(Tensor::zeros(2, 1));
    assert!(attend(&mut tape, bad, Annotations { h, len: 3 }).is_err());
}

#[test]
fn context_matches_brute_force_weighted_sum() {
    let f = fixture(4, 3);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    let scores: Vec<f64> = (0..3).map(|j| hand_score(&f, j)).collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    let c = tape.value(n.base.c).data();
    for k in 0..ANNOT {
        let expect: f64 = (0..3).map(|j| scores[j].exp() / z * f.h.get(j, k)).sum();
        assert!((c[k] - expect).abs() < 1e-14);
    }
}

#[test]
fn sentinel_state_cases() {
    let mut f = fixture(5, 2);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    let s = tape.value(n.sentinel.s).data().to_vec();
    assert_eq!(s.len(), STATE);
    for (a, b) in s.iter().zip(hand_sentinel(&f)) {
        assert!((a - b).abs() < 1e-14);
    }

    f.t_i.fill(0.0);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    assert!(tape.value(n.sentinel.s).data().iter().all(|&v| v == 0.0));

    for id in f.store.ids().collect::<Vec<_>>() {
        f.store.get_mut(id).fill(0.0);
    }
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).unwrap();
    assert!(tape.value(n.sentinel.gate).data().iter().all(|&v| v == 0.5));
    assert!(tape.value(n.sentinel.s).data().iter().all(|&v| v == 0.0));
}

#[test]
fn gate_saturates_closed_and_open() {
    let f = fixture(6, 4);
    let mut tape = Tape::new(&f.store);
    let closed = run(&mut tape, &f, SentinelScore::Fixed(-20.0)).unwrap();
    // raw scores are bounded by |V_a|_1 < 3, so a sentinel score of -20 is far below them
    assert!(tape.value(closed.adaptive.beta).item() < 1e-8);
    let c = tape.value(closed.base.c).clone();
    let cp = tape.value(closed.adaptive.c_plus).clone();
    assert!(c.zip_map(&cp, |a, b| (a - b).abs()).max_abs() < 1e-7);

    let open = run(&mut tape, &f, SentinelScore::Fixed(20.0)).unwrap();
    assert!(tape.value(open.adaptive.beta).item() > 1.0 - 1e-8);
    let s = tape.value(open.adaptive.s_lifted).clone();
    let cp = tape.value(open.adaptive.c_plus).clone();
    assert!(s.zip_map(&cp, |a, b| (a - b).abs()).max_abs() < 1e-7);
}

#[test]
fn negative_infinity_score_reduces_to_plain_attention() {
    let f = fixture(7, 5);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Fixed(f64::NEG_INFINITY)).unwrap();
    assert_eq!(tape.value(n.adaptive.beta).item(), 0.0);
    assert_eq!(tape.value(n.adaptive.c_plus), tape.value(n.base.c));
}

/// Checks the simplex, gate range and context identity on one random instance.
fn check_identities(seed: u64, j: usize) -> std::result::Result<(), String> {
    let f = fixture(seed, j);
    let mut tape = Tape::new(&f.store);
    let n = run(&mut tape, &f, SentinelScore::Learned).map_err(|e| e.to_string())?;
    let alpha = tape.value(n.base.alpha).data();
    let alpha_hat = tape.value(n.adaptive.alpha_hat).data();
    let beta = tape.value(n.adaptive.beta).item();
    if (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 || alpha.iter().any(|&a| a < 0.0) {
        return Err(format!("alpha off simplex: {alpha:?}"));
    }
    if (alpha_hat.iter().sum::<f64>() - 1.0).abs() > 1e-12 || alpha_hat.iter().any(|&a| a < 0.0) {
        return Err(format!("alpha_hat off simplex: {alpha_hat:?}"));
    }
    if !(beta > 0.0 && beta < 1.0) || beta != alpha_hat[j] {
        return Err(format!("beta {beta} invalid"));
    }
    for k in 0..j {
        if ((1.0 - beta) * alpha[k] - alpha_hat[k]).abs() > 1e-12 {
            return Err(format!("renormalisation identity fails at {k}"));
        }
    }
    let s = tape.value(n.adaptive.s_lifted).data();
    let cp = tape.value(n.adaptive.c_plus).data();
    for k in 0..ANNOT {
        let alt: f64 = (0..j).map(|r| alpha_hat[r] * f.h.get(r, k)).sum::<f64>() + beta * s[k];
        if (alt - cp[k]).abs() > 1e-10 {
            return Err(format!("context identity off by {}", (alt - cp[k]).abs()));
        }
    }
    Ok(())
}

#[test]
fn identities_hold_on_random_instances() {
    for seed in 0..200 {
        check_identities(seed, 1 + (seed as usize % 7)).unwrap();
    }
}

#[test]
fn all_parameters_pass_grad_check_and_receive_gradient() {
    let f = fixture(8, 3);
    let loss = |tape: &mut Tape<'_>| -> Result<NodeId> {
        let n = run(tape, &f, SentinelScore::Learned)?;
        let w = tape.input(Tensor::vector(vec![0.3, -1.2, 0.8, 0.5]));
        let y = tape.hadamard(n.adaptive.c_plus, w)?;
        let y = tape.tanh(y);
        Ok(tape.sum(y))
    };
    let report = grad_check(loss, &f.store, &GradCheckOptions::default());
    assert!(report.passes(1e-4), "{report:?}");

    let mut tape = Tape::new(&f.store);
    let l = loss(&mut tape).unwrap();
    let g = tape.backward(l).unwrap();
    for (id, name, _) in f.store.iter() {
        assert!(g.param(id).max_abs() > 0.0, "{name} has no gradient");
    }
}

#[test]
fn lift_is_used_when_widths_differ() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let sent = SentinelParams::register(&mut store, INPUT, 3, 6, ATT, &mut rng).unwrap();
    assert!(sent.lift.is_some());
    let mut store2 = ParamStore::new();
    let same = SentinelParams::register(&mut store2, INPUT, 6, 6, ATT, &mut rng).unwrap();
    assert!(same.lift.is_none());

    let mut tape = Tape::new(&store);
    let h = tape.input(Tensor::filled(2, 6, 0.1));
    let ann = Annotations { h, len: 2 };
    let e = tape.input(Tensor::vector(vec![0.0, 1.0]));
    let base = attend(&mut tape, e, ann).unwrap();
    let s = tape.input(Tensor::vector(vec![0.2, -0.1, 0.4]));
    let t = tape.input(Tensor::vector(vec![0.1, 0.1, 0.1]));
    let out = adaptive_attend(&mut tape, &sent, &base, s, t, SentinelScore::Learned).unwrap();
    assert_eq!(tape.shape(out.c_plus), (6, 1));
}
