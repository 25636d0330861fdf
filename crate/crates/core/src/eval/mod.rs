//! BLEU scoring, paired bootstrap significance and sentinel-gate analysis.

mod bleu;
mod bootstrap;
mod gate;

pub use bleu::{corpus_bleu, corpus_bleu_from_stats, sentence_stats, BleuReport, SentenceStats, MAX_ORDER};
pub use bootstrap::{bootstrap_significance, SignificanceResult, MIN_SAMPLES};
pub use gate::{gate_analysis, read_trace, write_trace, ClassMeans, GateRecord, GateTable};
