//! Paired text/frame procedure corpora: generation, vocabulary, persistence.

mod corpus;
mod frames;
mod grammar;
mod vocab;

pub use corpus::{
    build_vocab, generate_corpora, generate_corpus, ingest_external, load_corpus, save_corpus,
    CorpusRequest, CorpusSplit, GeneratorConfig, ProcedureSample, Split, SplitFractions,
    StepRecord, CORPUS_SCHEMA_VERSION, MAX_TEXT_TOKENS,
};
pub use frames::{mix_seed, represented_fraction, synthesize_frames, FrameProjector, NoiseConfig};
pub use grammar::{
    GrammarConfig, IngredientKind, IngredientSpec, MethodSpec, RawProcedure, TemplateFamily,
    GRAMMAR_TAG,
};
pub use vocab::{Vocab, BOS, EOS, PAD, RESERVED, UNK};
