//! Phrase-level bias probing and debiasing for masked language models.
//!
//! The pipeline has four stages, wired together by [`pipeline`] and the
//! `debias` CLI:
//!
//! 1. **filter** — mine candidate phrases from encyclopedia anchor text
//!    ([`ingest`]) and keep the ones closest to stereotype seed words in
//!    embedding space ([`filter`]).
//! 2. **search** — beam-search a restricted vocabulary for prompt bodies
//!    that maximize the attribute-conditioned divergence of multi-token
//!    phrase distributions ([`objective`], [`search`]).
//! 3. **debias** — fine-tune the full model to close that divergence over
//!    the searched prompts ([`trainer`]).
//! 4. **eval** — measure sentence-embedding association effect sizes before
//!    and after ([`seat`]) and guard language capability with a masked
//!    pseudo-perplexity score.
//!
//! Models are pluggable behind [`backend::MaskedLanguageModel`]; a
//! deterministic toy backend keeps every numerical contract testable
//! without a real checkpoint.

pub mod backend;
pub mod error;
pub mod ingest;
pub mod objective;

pub use backend::{
    load_backend, AdamWParams, MaskedLanguageModel, ModelMeta, Pooling, SpecialTokens,
    TokenSequence, TrainableModel,
};
pub use error::{Error, Result};
pub use ingest::{AttributeTuples, CandidatePhrase, TopicSeeds};
pub use objective::{PhraseBucket, PhraseDistribution, PromptCandidate};
