//! Pluggable masked-language-model backends.
//!
//! The pipeline talks to models exclusively through [`MaskedLanguageModel`]
//! (inference) and [`TrainableModel`] (gradient updates). Backends are
//! constructed from identifier strings by [`load_backend`], so nothing
//! upstream ever names a concrete model implementation:
//!
//! * `toy:<seed>[:<vocab>:<dim>]` — deterministic toy model for tests and
//!   smoke runs ([`toy::ToyBackend`]).
//! * any other string — treated as a checkpoint directory and loaded as a
//!   BERT-style encoder ([`bert::BertBackend`]).
//!
//! Logits are exposed raw (no softmax); all normalization happens in the
//! objective code.

pub mod adamw;
pub mod bert;
pub mod toy;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adamw::AdamWParams;

/// Special token ids a backend reserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl SpecialTokens {
    pub fn all(&self) -> [u32; 5] {
        [self.pad, self.unk, self.cls, self.sep, self.mask]
    }

    pub fn contains(&self, id: u32) -> bool {
        self.all().contains(&id)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let ids = self.all();
        for (i, a) in ids.iter().enumerate() {
            if *a as usize >= vocab_size {
                return Err(Error::Config(format!(
                    "special token id {a} is outside vocab of size {vocab_size}"
                )));
            }
            if ids[..i].contains(a) {
                return Err(Error::Config(format!("special token id {a} is not distinct")));
            }
        }
        Ok(())
    }
}

/// Static description of a loaded model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Checkpoint name or `toy:<seed>:<vocab>:<dim>` spec string.
    pub identifier: String,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    /// Maximum sequence length accepted by `tokenize` and the forward pass.
    pub max_len: usize,
    pub special: SpecialTokens,
    pub trainable: bool,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.hidden_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        self.special.validate(self.vocab_size)
    }
}

/// Which vector `cls_embedding` returns for checkpoint backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Final-layer hidden state at the CLS position (default).
    #[default]
    RawCls,
    /// Pooler output (dense + tanh over the CLS state).
    Pooler,
}

/// A validated token sequence with its mask positions.
///
/// `mask_positions` is derived from the ids at construction, so every index
/// is guaranteed to point at the mask token and the list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<u32>,
    mask_positions: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, meta: &ModelMeta) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Contract("token sequence must be non-empty".into()));
        }
        if ids.len() > meta.max_len {
            return Err(Error::Length(format!(
                "sequence of {} tokens exceeds model maximum {}",
                ids.len(),
                meta.max_len
            )));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= meta.vocab_size) {
            return Err(Error::Domain(format!(
                "token id {bad} is outside vocab of size {}",
                meta.vocab_size
            )));
        }
        let mask_positions = ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == meta.special.mask)
            .map(|(i, _)| i)
            .collect();
        Ok(Self { ids, mask_positions })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn mask_positions(&self) -> &[usize] {
        &self.mask_positions
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Handle to a forward-pass cache held inside a trainable backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheId(pub(crate) usize);

/// Inference interface. All methods are pure with respect to model state and
/// safe to call concurrently.
pub trait MaskedLanguageModel: Send + Sync {
    fn meta(&self) -> &ModelMeta;

    /// Full model input for `text`: content tokens wrapped in the backend's
    /// sentence delimiters. `[MASK]` placeholders map to the mask id.
    fn tokenize(&self, text: &str) -> Result<TokenSequence>;

    /// Content token ids for `text` without sentence delimiters. Used for
    /// phrase bucket lengths, prompt bodies and attribute slots.
    fn encode_content(&self, text: &str) -> Result<Vec<u32>>;

    /// Readable surface for `ids`, skipping special tokens.
    fn detokenize(&self, ids: &[u32]) -> String;

    /// Id of `word` when it maps to a single non-special content token.
    fn token_to_id(&self, word: &str) -> Option<u32>;

    /// Sentence embedding at the CLS position.
    fn cls_embedding(&self, seq: &TokenSequence) -> Result<Vec<f64>>;

    /// Raw logits, one row per mask position (in order), `vocab_size` wide.
    /// Errors when the sequence has no masks; rows exist only for masks.
    fn mask_logits(&self, seq: &TokenSequence) -> Result<Array2<f64>>;

    /// Persist the model so `load_backend` can restore it from `dir`.
    fn save_checkpoint(&self, dir: &Path) -> Result<()>;

    /// Training interface, when this backend supports parameter updates.
    fn as_trainable(&mut self) -> Option<&mut dyn TrainableModel>;
}

/// Gradient-update interface. Requires exclusive access; the training loop
/// is single-writer by construction.
pub trait TrainableModel: MaskedLanguageModel {
    /// Reset accumulated gradients and drop pending forward caches.
    fn zero_grad(&mut self);

    /// Forward pass that retains activations for a later [`backward`] call.
    /// Returns the same logits as [`MaskedLanguageModel::mask_logits`].
    ///
    /// [`backward`]: TrainableModel::backward
    fn forward_cached(&mut self, seq: &TokenSequence) -> Result<(Array2<f64>, CacheId)>;

    /// Accumulate parameter gradients for `dloss/dlogits` of a cached
    /// forward pass. Each cache may be consumed once.
    fn backward(&mut self, cache: CacheId, dlogits: &Array2<f64>) -> Result<()>;

    /// Plain gradient-descent update `p -= lr * g` (no optimizer state).
    fn gradient_descent_step(&mut self, lr: f64);

    /// AdamW update over all parameters using internally held moments.
    fn adamw_step(&mut self, hp: &AdamWParams) -> Result<()>;

    /// Restore parameters from a checkpoint written by `save_checkpoint`.
    fn load_checkpoint(&mut self, dir: &Path) -> Result<()>;

    /// Persist optimizer moments next to a checkpoint (for resuming).
    fn save_train_state(&self, dir: &Path) -> Result<()>;

    fn load_train_state(&mut self, dir: &Path) -> Result<()>;
}

/// Construct a backend from its identifier string.
pub fn load_backend(spec: &str, pooling: Pooling) -> Result<Box<dyn MaskedLanguageModel>> {
    if let Some(rest) = spec.strip_prefix("toy:") {
        return Ok(Box::new(toy::ToyBackend::from_spec(rest)?));
    }
    let dir = Path::new(spec);
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "model '{spec}' is neither a toy spec nor a checkpoint directory"
        )));
    }
    if dir.join(toy::TOY_CHECKPOINT_FILE).is_file() {
        return Ok(Box::new(toy::ToyBackend::load(dir)?));
    }
    Ok(Box::new(bert::BertBackend::load(dir, pooling)?))
}
