use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnalyzeArgs, EvaluateArgs, GenToyArgs, GradcheckArgs, RunConfig, TrainArgs, TranslateArgs};
use crate::data::{build_vocab, encode_corpus, generate_toy_splits, load_parallel, read_labels, read_sentences, Sentence, SyntheticTaskSpec};
use crate::error::{Error, Result};
use crate::eval::{bootstrap_significance, corpus_bleu, gate_analysis, read_trace, write_trace, GateRecord, MIN_SAMPLES};
use crate::exec::Exec;
use crate::model::{self, Checkpoint, DevSet, Mode, Model, ModelConfig, StepOptions, TrainState};
use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport, Tape};
use crate::search::translate_all;

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// BLEU on the ×100 scale with one decimal.
pub fn format_bleu(bleu: f64) -> String {
    format!("{:.1}", 100.0 * bleu)
}

/// Difference of the two displayed scores, signed, e.g. `+0.8`; `0.0` when they agree.
pub fn format_delta(from: f64, to: f64) -> String {
    let shown = |b: f64| format_bleu(b).parse::<f64>().unwrap_or(0.0);
    let d = shown(to) - shown(from);
    if d.abs() < 0.05 {
        "0.0".into()
    } else {
        format!("{d:+.1}")
    }
}

pub(super) fn train(a: &TrainArgs, exec: Exec, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::load(&a.config, &a.overrides)?;
    if exec == Exec::Sequential {
        cfg.train.exec = Exec::Sequential;
    }
    let resolved = cfg.to_text();
    for line in resolved.lines() {
        log::info!("config: {line}");
    }
    let (train_src, train_tgt) = (cfg.train_src.as_ref().unwrap(), cfg.train_tgt.as_ref().unwrap());
    let loaded = load_parallel(train_src, train_tgt, cfg.model.max_len)?;
    if loaded.corpus.is_empty() {
        return Err(Error::domain("no usable training pairs"));
    }
    let vs = build_vocab(&loaded.corpus.sources(), cfg.src_words)?;
    let vt = build_vocab(&loaded.corpus.targets(), cfg.tgt_words)?;
    let (vs, vt) = (vs.vocab, vt.vocab);
    let data = encode_corpus(&loaded.corpus, &vs, &vt);

    let dev = match (&cfg.dev_src, &cfg.dev_tgt) {
        (Some(s), Some(t)) => Some(load_parallel(s, t, usize::MAX)?.corpus),
        _ => None,
    };
    let dev_sources: Vec<Vec<usize>> = dev
        .as_ref()
        .map(|d| d.sources().iter().map(|s| vs.encode(s)).collect())
        .unwrap_or_default();
    let dev_refs: Vec<Sentence> = dev.as_ref().map(|d| d.targets()).unwrap_or_default();
    let dev_set = dev.as_ref().map(|_| DevSet {
        sources: &dev_sources,
        references: &dev_refs,
        tgt_vocab: &vt,
    });

    let mut mc = cfg.model.clone();
    mc.src_vocab = vs.len();
    mc.tgt_vocab = vt.len();
    let mut m = Model::new(mc)?;
    let mut state = TrainState::new(&m, &cfg.train)?;
    let params = m.param_count();
    log::info!("{} model with {params} parameters, {} training pairs", m.mode(), data.len());
    let outcome = model::train(&mut m, &mut state, &data, dev_set.as_ref(), &cfg.train)?;

    let mut log_text = String::new();
    for line in resolved.lines() {
        let _ = writeln!(log_text, "# {line}");
    }
    let _ = writeln!(log_text, "# params {params}");
    let _ = writeln!(
        log_text,
        "# train_pairs {} dropped_too_long {} dropped_empty {}",
        data.len(),
        loaded.dropped_too_long,
        loaded.dropped_empty
    );
    for e in &outcome.log {
        let _ = writeln!(log_text, "{}", e.to_line());
    }
    let (best, best_state) = outcome.best;
    let best_bleu = best_state.best_dev_bleu.map_or("-".into(), |b| format!("{:.2}", 100.0 * b));
    let _ = writeln!(log_text, "# best_epoch {} dev_bleu {best_bleu}", best_state.epoch);

    let ck = Checkpoint {
        model: best,
        state: best_state,
        vocabs: Some((vs, vt)),
    };
    ck.save(&cfg.checkpoint)?;
    write_file(&cfg.log, &log_text)?;
    emit(
        out,
        &format!(
            "params\t{params}\nepochs\t{}\nbest_epoch\t{}\ndev_bleu\t{best_bleu}\ncheckpoint\t{}\nlog\t{}\n",
            outcome.log.len(),
            ck.state.epoch,
            cfg.checkpoint.display(),
            cfg.log.display()
        ),
    )?;
    Ok(0)
}

pub(super) fn translate(a: &TranslateArgs, exec: Exec, out: &mut dyn Write) -> Result<i32> {
    if a.beam == 0 {
        return Err(Error::Config("--beam must be at least 1".into()));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    if a.trace.is_some() && ck.model.mode() == Mode::Baseline {
        return Err(Error::Config(
            "--trace needs an adaptive model; this checkpoint has no sentinel gate".into(),
        ));
    }
    let (vs, vt) = ck.vocabs.as_ref().ok_or_else(|| Error::Checkpoint {
        path: a.checkpoint.clone(),
        reason: "no vocabularies stored; cannot translate text".into(),
    })?;
    let max_len = a.max_len.unwrap_or(ck.model.config.max_len);
    let lines = read_sentences(&a.input)?;
    let keep: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].is_empty()).collect();
    let sources: Vec<Vec<usize>> = keep.iter().map(|&i| vs.encode(&lines[i])).collect();
    let hyps = translate_all(&ck.model, &sources, a.beam, max_len, exec)?;

    let mut outputs = vec![String::new(); lines.len()];
    let mut records = Vec::new();
    for (&i, h) in keep.iter().zip(&hyps) {
        let words = vt.decode(&h.tokens);
        for (step, (w, &beta)) in words.iter().zip(&h.betas).enumerate() {
            records.push(GateRecord {
                sentence: i,
                step,
                token: w.clone(),
                beta,
            });
        }
        outputs[i] = words.join(" ");
    }
    let mut text = String::new();
    for o in &outputs {
        text.push_str(o);
        text.push('\n');
    }
    if let Some(t) = &a.trace {
        write_trace(t, &records)?;
    }
    match &a.output {
        Some(p) => write_file(p, &text)?,
        None => emit(out, &text)?,
    }
    Ok(0)
}

fn read_aligned(paths: &[&Path]) -> Result<Vec<Vec<Sentence>>> {
    let all = paths.iter().map(|p| read_sentences(p)).collect::<Result<Vec<_>>>()?;
    for (p, s) in paths.iter().zip(&all).skip(1) {
        if s.len() != all[0].len() {
            return Err(Error::Ingestion(format!(
                "{} has {} lines but {} has {}",
                paths[0].display(),
                all[0].len(),
                p.display(),
                s.len()
            )));
        }
    }
    Ok(all)
}

pub(super) fn evaluate(a: &EvaluateArgs, exec: Exec, out: &mut dyn Write) -> Result<i32> {
    if a.compare.is_some() && a.bootstrap < MIN_SAMPLES {
        return Err(Error::Config(format!("--bootstrap must be at least {MIN_SAMPLES}")));
    }
    let mut paths: Vec<&Path> = vec![&a.hyp];
    paths.extend(a.refs.iter().map(|p| p.as_path()));
    if let Some(c) = &a.compare {
        paths.push(c);
    }
    let mut all = read_aligned(&paths)?;
    let other = a.compare.as_ref().map(|_| all.pop().unwrap());
    let hyps = all.remove(0);
    let refs: Vec<Vec<Sentence>> = (0..hyps.len())
        .map(|i| all.iter().map(|r| r[i].clone()).collect())
        .collect();
    let rep = corpus_bleu(&hyps, &refs)?;
    let mut s = String::new();
    let _ = writeln!(s, "bleu\t{}", format_bleu(rep.bleu));
    for (n, p) in rep.precisions.iter().enumerate() {
        let _ = writeln!(s, "p{}\t{:.4}", n + 1, p);
    }
    let _ = writeln!(s, "bp\t{:.4}", rep.brevity_penalty);
    let _ = writeln!(s, "hyp_len\t{}\nref_len\t{}", rep.hyp_len, rep.ref_len);
    if rep.zero_match {
        let _ = writeln!(s, "zero_match\ttrue");
    }
    if let Some(other) = other {
        let sig = bootstrap_significance(&hyps, &other, &refs, a.bootstrap, a.seed, exec)?;
        let _ = writeln!(s, "compare_bleu\t{}", format_bleu(sig.bleu_b));
        let _ = writeln!(s, "delta\t{}", format_delta(sig.bleu_a, sig.bleu_b));
        let _ = writeln!(s, "p_value\t{:.4}", sig.p_value);
        let _ = writeln!(s, "samples\t{}", sig.samples);
        let _ = writeln!(
            s,
            "delta_95ci\t{:.1}\t{:.1}",
            100.0 * sig.delta_interval.0,
            100.0 * sig.delta_interval.1
        );
    }
    emit(out, &s)?;
    Ok(0)
}

pub(super) fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Config(format!("--threshold must lie in [0, 1], got {}", a.threshold)));
    }
    let records = read_trace(&a.trace)?;
    let labels = a.labels.as_ref().map(|p| read_labels(p)).transpose()?;
    let table = gate_analysis(&records, a.threshold, a.top, labels.as_deref())?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {} of {} tokens with gate >= {}",
        table.passing, table.total, table.threshold
    );
    let width = table.rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(s, "# {:<width$}  count", "token");
    for (tok, n) in &table.rows {
        let _ = writeln!(s, "{tok}\t{n}");
    }
    if let Some(m) = &table.class_means {
        let mean = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "mean_beta_aligned\t{}", mean(m.aligned));
        let _ = writeln!(s, "mean_beta_inserted\t{}", mean(m.inserted));
        let _ = writeln!(s, "count_aligned\t{}", m.aligned_count);
        let _ = writeln!(s, "count_inserted\t{}", m.inserted_count);
        let _ = writeln!(s, "skipped_sentences\t{}", m.skipped_sentences);
    }
    emit(out, &s)?;
    Ok(0)
}

/// Micro-model size limits for the gradient check.
const MICRO_MAX_DIM: usize = 8;
const MICRO_VOCAB: usize = 12;
const MICRO_SRC_LEN: usize = 4;
const MICRO_TGT_LEN: usize = 3;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
// At the training init scale most gate gradients sit near 1e-9, below what a
// central difference at step 1e-3 can resolve on a loss of order 10.
const MICRO_INIT_SCALE: f64 = 0.5;

/// Summary of [`gradcheck_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSummary {
    pub mode: Mode,
    pub param_count: usize,
    pub report: GradCheckReport,
}

/// Finite-difference check of the full sentence loss on a micro model.
pub fn gradcheck_report(mode: Mode, emb_dim: usize, hidden_dim: usize, seed: u64, corrupt: Option<f64>) -> Result<GradcheckSummary> {
    if emb_dim == 0 || emb_dim > MICRO_MAX_DIM || hidden_dim > MICRO_MAX_DIM {
        return Err(Error::Config(format!("gradcheck dimensions must lie in 1..={MICRO_MAX_DIM}")));
    }
    let mut model = Model::new(ModelConfig {
        mode,
        src_vocab: MICRO_VOCAB,
        tgt_vocab: MICRO_VOCAB,
        emb_dim,
        hidden_dim,
        dropout_rate: 0.0,
        max_len: 10,
        seed,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in model.params.ids().collect::<Vec<_>>() {
        for x in model.params.get_mut(id).data_mut() {
            *x = rng.gen_range(-MICRO_INIT_SCALE..MICRO_INIT_SCALE);
        }
    }
    let mut draw = |n: usize| -> Vec<usize> { (0..n).map(|_| rng.gen_range(4..MICRO_VOCAB)).collect() };
    let (src, tgt) = (draw(MICRO_SRC_LEN), draw(MICRO_TGT_LEN));
    let opts = GradCheckOptions {
        samples_per_tensor: usize::MAX,
        seed,
        corrupt,
        ..Default::default()
    };
    let report = grad_check(
        |tape: &mut Tape<'_>| model.sentence_loss(tape, &src, &tgt, &mut StepOptions::default()),
        &model.params,
        &opts,
    );
    Ok(GradcheckSummary {
        mode,
        param_count: model.param_count(),
        report,
    })
}

pub(super) fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let mut ok = true;
    let mut s = String::new();
    for mode in [Mode::Baseline, Mode::Adaptive] {
        let sum = gradcheck_report(mode, a.emb_dim, a.hidden_dim, a.seed, a.corrupt)?;
        for p in &sum.report.params {
            let _ = writeln!(s, "{mode}\t{}\t{}\t{:.3e}", p.name, p.checked, p.max_rel_err);
        }
        let pass = sum.report.passes(GRADCHECK_TOLERANCE);
        ok &= pass;
        let _ = writeln!(
            s,
            "{mode}\t{}\tworst {:.3e}\tparams {}",
            if pass { "PASS" } else { "FAIL" },
            sum.report.worst(),
            sum.param_count
        );
    }
    emit(out, &s)?;
    Ok(if ok { 0 } else { 2 })
}

pub(super) fn gen_toy(a: &GenToyArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = SyntheticTaskSpec {
        alphabet_size: a.alphabet,
        insertion_tokens: a.insertion_tokens.clone(),
        insertion_prob: a.insertion_prob,
        seed: a.seed,
        size: a.size,
        min_len: a.min_len,
        max_len: a.max_len,
    };
    let splits = generate_toy_splits(&spec, a.dev, a.test).map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let p = |ext: &str| a.out.join(format!("{name}.{ext}"));
        part.corpus.save(&p("src"), &p("tgt"))?;
        crate::data::write_labels(&p("labels"), &part.labels)?;
    }
    let conf = "# synthetic toy task\nmode = adaptive\ntrain_src = train.src\ntrain_tgt = train.tgt\n\
                dev_src = dev.src\ndev_tgt = dev.tgt\ncheckpoint = model.ckpt\nlog = train.log\n";
    write_file(&a.out.join("toy.conf"), conf)?;
    emit(
        out,
        &format!(
            "train\t{}\ndev\t{}\ntest\t{}\ninsertion_rate\t{:.4}\nconfig\t{}\n",
            splits.train.corpus.len(),
            splits.dev.corpus.len(),
            splits.test.corpus.len(),
            splits.train.insertion_rate(),
            a.out.join("toy.conf").display()
        ),
    )?;
    Ok(0)
}
