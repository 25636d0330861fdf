use adaptive_nmt::attention::SentinelScore;
use adaptive_nmt::encoder::encode;
use adaptive_nmt::model::{Mode, Model, ModelConfig, StepOptions};
use adaptive_nmt::numerics::{grad_check, GradCheckOptions, Tape, Tensor};
use adaptive_nmt::Error;

fn config(mode: Mode, seed: u64) -> ModelConfig {
    ModelConfig {
        mode,
        src_vocab: 12,
        tgt_vocab: 12,
        emb_dim: 8,
        hidden_dim: 8,
        dropout_rate: 0.0,
        max_len: 10,
        seed,
    }
}

fn zero_all(m: &mut Model) {
    for id in m.params.ids().collect::<Vec<_>>() {
        m.params.get_mut(id).fill(0.0);
    }
}

#[test]
fn uniform_model_loss_is_k_log_v() {
    for mode in [Mode::Baseline, Mode::Adaptive] {
        let mut m = Model::new(config(mode, 1)).unwrap();
        zero_all(&mut m);
        let tgt = [4, 5, 6];
        let mut tape = Tape::new(&m.params);
        let loss = m.sentence_loss(&mut tape, &[4, 7], &tgt, &mut StepOptions::default()).unwrap();
        let want = (tgt.len() + 1) as f64 * (12f64).ln();
        assert!((tape.value(loss).item() - want).abs() < 1e-12);
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for mode in [Mode::Baseline, Mode::Adaptive] {
        let m = Model::new(config(mode, 3)).unwrap();
        let (src, tgt) = ([4, 9, 5, 11], [6, 10, 7]);
        let opts = GradCheckOptions {
            samples_per_tensor: usize::MAX,
            ..Default::default()
        };
        let report = grad_check(
            |tape: &mut Tape<'_>| m.sentence_loss(tape, &src, &tgt, &mut StepOptions::default()),
            &m.params,
            &opts,
        );
        assert_eq!(report.params.len(), m.params.len());
        if !report.passes(1e-4) {
            // a coincidentally small component carries either O(h²)
            // truncation error or round-off above the bound; a 10x smaller
            // or larger step must then clear it
            let retry = |step: f64| {
                let o = GradCheckOptions { step, ..opts.clone() };
                grad_check(
                    |tape: &mut Tape<'_>| m.sentence_loss(tape, &src, &tgt, &mut StepOptions::default()),
                    &m.params,
                    &o,
                )
            };
            let (fine, coarse) = (retry(1e-4), retry(1e-2));
            for ((p, f), c) in report.params.iter().zip(&fine.params).zip(&coarse.params) {
                let best = p.max_rel_err.min(f.max_rel_err).min(c.max_rel_err);
                assert!(best < 1e-4, "{mode} {}: {best}", p.name);
            }
        }
    }
}

#[test]
fn step_traces_are_distributions_with_mode_specific_weights() {
    let src = [4, 5, 6];
    for mode in [Mode::Baseline, Mode::Adaptive] {
        let m = Model::new(config(mode, 7)).unwrap();
        let traces = m.forced_traces(&src, &[7, 8], SentinelScore::Learned).unwrap();
        assert_eq!(traces.len(), 3);
        for t in traces {
            let lse = t.log_probs.iter().map(|l| l.exp()).sum::<f64>().ln();
            assert!(lse.abs() < 1e-9);
            match mode {
                Mode::Baseline => {
                    assert!(t.beta.is_none());
                    assert_eq!(t.weights.len(), src.len());
                }
                Mode::Adaptive => {
                    assert_eq!(t.weights.len(), src.len() + 1);
                    assert_eq!(t.beta, t.weights.last().copied());
                    let b = t.beta.unwrap();
                    assert!(b > 0.0 && b < 1.0);
                }
            }
        }
    }
}

#[test]
fn gate_pinned_shut_reproduces_baseline() {
    for seed in 0..5 {
        let base = Model::new(config(Mode::Baseline, seed)).unwrap();
        let adaptive = Model::new(config(Mode::Adaptive, seed)).unwrap();
        for (_, name, t) in base.params.iter() {
            assert_eq!(adaptive.params.by_name(name), Some(t));
        }
        let (src, tgt) = ([4, 10, 6, 5], [9, 7, 8, 11]);
        let a = adaptive.forced_traces(&src, &tgt, SentinelScore::Fixed(f64::NEG_INFINITY)).unwrap();
        let b = base.forced_traces(&src, &tgt, SentinelScore::Learned).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.beta, Some(0.0));
            for (p, q) in x.log_probs.iter().zip(&y.log_probs) {
                assert!((p - q).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn adaptive_parameters_are_a_strict_superset() {
    let base = Model::new(config(Mode::Baseline, 1)).unwrap();
    let adaptive = Model::new(config(Mode::Adaptive, 1)).unwrap();
    assert!(adaptive.param_count() > base.param_count());
    for name in base.params.names() {
        assert!(adaptive.params.id(name).is_some(), "{name}");
    }
    let mut names = adaptive.params.names().to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), adaptive.params.len());
}

#[test]
fn initial_state_from_mean_annotation() {
    let mut m = Model::new(config(Mode::Baseline, 2)).unwrap();
    // Zero W_init (and bias) gives a zero state.
    let w = m.layout.init.weight;
    m.params.get_mut(w).fill(0.0);
    let mut tape = Tape::new(&m.params);
    let ctx = m.encode_source(&mut tape, &[4, 5]).unwrap();
    assert!(tape.value(ctx.t0).data().iter().all(|&x| x == 0.0));

    // J = 1: the mean is the single annotation; compare with direct evaluation.
    let m = Model::new(config(Mode::Baseline, 2)).unwrap();
    let mut tape = Tape::new(&m.params);
    let ann = encode(&mut tape, &m.layout.encoder, &[6]).unwrap();
    let t0 = m.init_decoder_state(&mut tape, ann.h).unwrap();
    let h = tape.value(ann.h).transpose();
    let w = m.params.get(m.layout.init.weight);
    let b = m.params.get(m.layout.init.bias.unwrap());
    let pre = w.matmul(&h).unwrap();
    let want: Vec<f64> = pre.data().iter().zip(b.data()).map(|(x, y)| (x + y).tanh()).collect();
    for (g, w) in tape.value(t0).data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-14);
    }

    let empty = Tensor::zeros(0, 8);
    let mut tape = Tape::new(&m.params);
    let h = tape.input(empty);
    assert!(m.init_decoder_state(&mut tape, h).is_err());
}

#[test]
fn invalid_inputs_are_reported() {
    let m = Model::new(config(Mode::Adaptive, 1)).unwrap();
    let mut tape = Tape::new(&m.params);
    let ctx = m.encode_source(&mut tape, &[4]).unwrap();
    let err = m.decode_step(&mut tape, &ctx, 12, ctx.t0, &mut StepOptions::default());
    assert!(matches!(err, Err(Error::Index { .. })));

    let mut tape = Tape::new(&m.params);
    let mut o = StepOptions::default();
    assert!(matches!(m.sentence_loss(&mut tape, &[], &[4], &mut o), Err(Error::Domain(_))));
    assert!(matches!(m.sentence_loss(&mut tape, &[4], &[4; 11], &mut o), Err(Error::Domain(_))));
    let loss = m.sentence_loss(&mut tape, &[4, 5], &[6], &mut o).unwrap();
    assert!(tape.value(loss).item() >= 0.0);
}
