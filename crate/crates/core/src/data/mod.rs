//! Corpus ingestion, vocabularies, batching and the synthetic toy task.

mod batch;
mod corpus;
mod toy;
mod vocab;

pub use batch::{batch_encoded, encode_corpus, make_batches, Batch, EncodedPair};
pub use corpus::{load_parallel, read_sentences, tokenize, write_sentences, LoadedCorpus, ParallelCorpus, Sentence};
pub use toy::{
    generate_toy_corpus, generate_toy_splits, read_labels, source_symbol, target_symbol, write_labels, AlignLabel,
    SyntheticTaskSpec, ToyCorpus, ToySplits, ToyTask,
};
pub use vocab::{build_vocab, VocabBuild, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};
