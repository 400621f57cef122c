//! Vocabularies, datasets, synthetic corpora and on-disk formats.

mod checkpoint;
mod dataset;
mod questions;
mod synth;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance, CHECKPOINT_FORMAT_VERSION};
pub use dataset::{
    load_dataset, load_split, save_dataset, save_split, split_file_name, DomainDataset, Example, Split,
    DATASET_FORMAT_VERSION,
};
pub use questions::{load_questions, make_questions, save_questions, Question, QUESTIONS_FORMAT_VERSION};
pub use synth::{synth_generate, top_tokens, unigram_counts, SynthSpec};
pub use vocab::{Vocab, BOS, EOS, PAD, RESERVED, UNK, VOCAB_FORMAT_VERSION};
