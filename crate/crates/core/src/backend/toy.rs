//! Deterministic toy masked language model.
//!
//! Architecture is fixed so every oracle value is hand-computable:
//! embedding table -> mean-pool context mixing -> linear mask head. The
//! context vector of a sequence is the mean of its token embedding rows;
//! the CLS embedding is that vector (identity projection) and every mask
//! position shares the logit row `c . W + b`.
//!
//! Tokenization hashes each whitespace-delimited word into the content id
//! range. `detokenize` emits the canonical surface `w<id>`, which tokenizes
//! back to the same id, so id-level round trips are exact.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{update_block, AdamWParams, AdamWState};
use super::{CacheId, MaskedLanguageModel, ModelMeta, SpecialTokens, TokenSequence, TrainableModel};
use crate::error::{Error, Result};

pub const TOY_CHECKPOINT_FILE: &str = "toy_model.json";

const NUM_SPECIAL: u32 = 5;
const PAD: u32 = 0;
const UNK: u32 = 1;
const CLS: u32 = 2;
const SEP: u32 = 3;
const MASK: u32 = 4;

const DEFAULT_VOCAB: usize = 128;
const DEFAULT_HIDDEN: usize = 16;
const MAX_LEN: usize = 256;

const SPECIAL_SURFACES: [(&str, u32); 5] = [
    ("[PAD]", PAD),
    ("[UNK]", UNK),
    ("[CLS]", CLS),
    ("[SEP]", SEP),
    ("[MASK]", MASK),
];

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

struct ForwardCache {
    ids: Vec<u32>,
    context: Array1<f64>,
    n_masks: usize,
    consumed: bool,
}

struct Gradients {
    embed: Array2<f64>,
    head_w: Array2<f64>,
    head_b: Array1<f64>,
}

/// Deterministic differentiable toy MLM, reproducible from its spec string.
pub struct ToyBackend {
    meta: ModelMeta,
    seed: u64,
    embed: Array2<f64>,
    head_w: Array2<f64>,
    head_b: Array1<f64>,
    grads: Option<Gradients>,
    caches: Vec<ForwardCache>,
    adamw: Option<AdamWState>,
}

#[derive(Serialize, Deserialize)]
struct ToyCheckpoint {
    identifier: String,
    seed: u64,
    vocab_size: usize,
    hidden_dim: usize,
    embed: Vec<Vec<f64>>,
    head_w: Vec<Vec<f64>>,
    head_b: Vec<f64>,
}

impl ToyBackend {
    /// Build from `<seed>[:<vocab>:<dim>]` (the part after `toy:`).
    pub fn from_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid {what} '{s}' in toy spec")))
        };
        match parts.as_slice() {
            [seed] => Self::new(parse(seed, "seed")?, DEFAULT_VOCAB, DEFAULT_HIDDEN),
            [seed, vocab, dim] => Self::new(
                parse(seed, "seed")?,
                parse(vocab, "vocab size")? as usize,
                parse(dim, "hidden dim")? as usize,
            ),
            _ => Err(Error::Config(format!(
                "toy spec '{spec}' must be <seed> or <seed>:<vocab>:<dim>"
            ))),
        }
    }

    pub fn new(seed: u64, vocab_size: usize, hidden_dim: usize) -> Result<Self> {
        if vocab_size < 8 {
            return Err(Error::Config(format!(
                "toy vocab size {vocab_size} is below the minimum of 8"
            )));
        }
        if hidden_dim < 2 {
            return Err(Error::Config(format!(
                "toy hidden dim {hidden_dim} is below the minimum of 2"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut fill = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() - 0.5)
        };
        let embed = fill(vocab_size, hidden_dim);
        let head_w = fill(hidden_dim, vocab_size);
        let head_b = Array1::zeros(vocab_size);
        let meta = ModelMeta {
            identifier: format!("toy:{seed}:{vocab_size}:{hidden_dim}"),
            vocab_size,
            hidden_dim,
            max_len: MAX_LEN,
            special: SpecialTokens {
                pad: PAD,
                unk: UNK,
                cls: CLS,
                sep: SEP,
                mask: MASK,
            },
            trainable: true,
        };
        meta.validate()?;
        Ok(Self {
            meta,
            seed,
            embed,
            head_w,
            head_b,
            grads: None,
            caches: Vec::new(),
            adamw: None,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(dir.join(TOY_CHECKPOINT_FILE))?;
        let ckpt: ToyCheckpoint = serde_json::from_str(&raw)?;
        let mut model = Self::new(ckpt.seed, ckpt.vocab_size, ckpt.hidden_dim)?;
        model.meta.identifier = ckpt.identifier;
        model.embed = rows_to_array(&ckpt.embed)?;
        model.head_w = rows_to_array(&ckpt.head_w)?;
        model.head_b = Array1::from_vec(ckpt.head_b);
        if model.embed.dim() != (ckpt.vocab_size, ckpt.hidden_dim)
            || model.head_w.dim() != (ckpt.hidden_dim, ckpt.vocab_size)
            || model.head_b.len() != ckpt.vocab_size
        {
            return Err(Error::Config("toy checkpoint has inconsistent shapes".into()));
        }
        Ok(model)
    }

    fn word_to_id(&self, word: &str) -> u32 {
        for (surface, id) in SPECIAL_SURFACES {
            if word == surface {
                return id;
            }
        }
        if let Some(rest) = word.strip_prefix('w') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(id) = rest.parse::<u32>() {
                    if id >= NUM_SPECIAL && (id as usize) < self.meta.vocab_size {
                        return id;
                    }
                }
            }
        }
        let content = self.meta.vocab_size as u64 - NUM_SPECIAL as u64;
        NUM_SPECIAL + (fnv1a64(word.as_bytes()) % content) as u32
    }

    fn context(&self, seq: &TokenSequence) -> Result<Array1<f64>> {
        let mut c = Array1::zeros(self.meta.hidden_dim);
        for &id in seq.ids() {
            if id as usize >= self.meta.vocab_size {
                return Err(Error::Domain(format!(
                    "token id {id} is outside vocab of size {}",
                    self.meta.vocab_size
                )));
            }
            c += &self.embed.row(id as usize);
        }
        c /= seq.len() as f64;
        Ok(c)
    }

    fn logit_row(&self, context: &Array1<f64>) -> Array1<f64> {
        context.dot(&self.head_w) + &self.head_b
    }

    // -- parameter access for oracle tests and hand-built instances --

    pub fn set_embedding_row(&mut self, id: u32, row: &[f64]) {
        assert_eq!(row.len(), self.meta.hidden_dim);
        self.embed
            .row_mut(id as usize)
            .assign(&Array1::from_vec(row.to_vec()));
    }

    pub fn embedding_row(&self, id: u32) -> Vec<f64> {
        self.embed.row(id as usize).to_vec()
    }

    pub fn set_head_column(&mut self, token: u32, column: &[f64], bias: f64) {
        assert_eq!(column.len(), self.meta.hidden_dim);
        for (d, &v) in column.iter().enumerate() {
            self.head_w[(d, token as usize)] = v;
        }
        self.head_b[token as usize] = bias;
    }

    pub fn zero_head(&mut self) {
        self.head_w.fill(0.0);
        self.head_b.fill(0.0);
    }

    pub fn zero_embeddings(&mut self) {
        self.embed.fill(0.0);
    }

    pub fn scale_embeddings(&mut self, factor: f64) {
        self.embed *= factor;
    }

    /// Flat parameter layout: embedding rows, head weights, head bias.
    pub fn param_count(&self) -> usize {
        self.embed.len() + self.head_w.len() + self.head_b.len()
    }

    pub fn param_get(&self, index: usize) -> f64 {
        let (ne, nw) = (self.embed.len(), self.head_w.len());
        if index < ne {
            self.embed.as_slice().unwrap()[index]
        } else if index < ne + nw {
            self.head_w.as_slice().unwrap()[index - ne]
        } else {
            self.head_b[index - ne - nw]
        }
    }

    pub fn param_set(&mut self, index: usize, value: f64) {
        let (ne, nw) = (self.embed.len(), self.head_w.len());
        if index < ne {
            self.embed.as_slice_mut().unwrap()[index] = value;
        } else if index < ne + nw {
            self.head_w.as_slice_mut().unwrap()[index - ne] = value;
        } else {
            self.head_b[index - ne - nw] = value;
        }
    }

    pub fn grad_get(&self, index: usize) -> f64 {
        let g = self.grads.as_ref().expect("zero_grad not called");
        let (ne, nw) = (g.embed.len(), g.head_w.len());
        if index < ne {
            g.embed.as_slice().unwrap()[index]
        } else if index < ne + nw {
            g.head_w.as_slice().unwrap()[index - ne]
        } else {
            g.head_b[index - ne - nw]
        }
    }

    pub fn params_bitwise_eq(&self, other: &Self) -> bool {
        let bits = |a: &[f64]| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(self.embed.as_slice().unwrap()) == bits(other.embed.as_slice().unwrap())
            && bits(self.head_w.as_slice().unwrap()) == bits(other.head_w.as_slice().unwrap())
            && bits(self.head_b.as_slice().unwrap()) == bits(other.head_b.as_slice().unwrap())
    }

    fn ensure_grads(&mut self) -> &mut Gradients {
        let (v, d) = (self.meta.vocab_size, self.meta.hidden_dim);
        self.grads.get_or_insert_with(|| Gradients {
            embed: Array2::zeros((v, d)),
            head_w: Array2::zeros((d, v)),
            head_b: Array1::zeros(v),
        })
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::Config(format!("ragged matrix in toy checkpoint: {e}")))
}

fn array_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl MaskedLanguageModel for ToyBackend {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        let mut ids = vec![CLS];
        ids.extend(self.encode_content(text)?);
        ids.push(SEP);
        TokenSequence::new(ids, &self.meta)
    }

    fn encode_content(&self, text: &str) -> Result<Vec<u32>> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::Contract("text is empty after whitespace normalization".into()));
        }
        Ok(words.iter().map(|w| self.word_to_id(w)).collect())
    }

    fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| !self.meta.special.contains(id))
            .map(|&id| format!("w{id}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn token_to_id(&self, word: &str) -> Option<u32> {
        let id = self.word_to_id(word);
        (!self.meta.special.contains(id)).then_some(id)
    }

    fn cls_embedding(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        Ok(self.context(seq)?.to_vec())
    }

    fn mask_logits(&self, seq: &TokenSequence) -> Result<Array2<f64>> {
        if seq.mask_positions().is_empty() {
            return Err(Error::Contract(
                "mask_logits requires at least one mask position".into(),
            ));
        }
        let row = self.logit_row(&self.context(seq)?);
        let n = seq.mask_positions().len();
        let mut out = Array2::zeros((n, self.meta.vocab_size));
        for l in 0..n {
            out.row_mut(l).assign(&row);
        }
        Ok(out)
    }

    fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let ckpt = ToyCheckpoint {
            identifier: self.meta.identifier.clone(),
            seed: self.seed,
            vocab_size: self.meta.vocab_size,
            hidden_dim: self.meta.hidden_dim,
            embed: array_to_rows(&self.embed),
            head_w: array_to_rows(&self.head_w),
            head_b: self.head_b.to_vec(),
        };
        std::fs::write(dir.join(TOY_CHECKPOINT_FILE), serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    fn as_trainable(&mut self) -> Option<&mut dyn TrainableModel> {
        Some(self)
    }
}

impl TrainableModel for ToyBackend {
    fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grads {
            g.embed.fill(0.0);
            g.head_w.fill(0.0);
            g.head_b.fill(0.0);
        } else {
            self.ensure_grads();
        }
        self.caches.clear();
    }

    fn forward_cached(&mut self, seq: &TokenSequence) -> Result<(Array2<f64>, CacheId)> {
        let logits = self.mask_logits(seq)?;
        self.caches.push(ForwardCache {
            ids: seq.ids().to_vec(),
            context: self.context(seq)?,
            n_masks: seq.mask_positions().len(),
            consumed: false,
        });
        Ok((logits, CacheId(self.caches.len() - 1)))
    }

    fn backward(&mut self, cache: CacheId, dlogits: &Array2<f64>) -> Result<()> {
        let cache_entry = self
            .caches
            .get_mut(cache.0)
            .ok_or_else(|| Error::Contract(format!("unknown forward cache {}", cache.0)))?;
        if cache_entry.consumed {
            return Err(Error::Contract(format!("forward cache {} already consumed", cache.0)));
        }
        cache_entry.consumed = true;
        if dlogits.dim() != (cache_entry.n_masks, self.meta.vocab_size) {
            return Err(Error::Contract(format!(
                "dlogits shape {:?} does not match cached forward ({} x {})",
                dlogits.dim(),
                cache_entry.n_masks,
                self.meta.vocab_size
            )));
        }
        let ids = cache_entry.ids.clone();
        let context = cache_entry.context.clone();

        // All mask rows share one logit row, so row gradients sum.
        let g: Array1<f64> = dlogits.sum_axis(ndarray::Axis(0));
        let d_context = self.head_w.dot(&g);
        let grads = self.ensure_grads();
        grads.head_b += &g;
        for d in 0..context.len() {
            for v in 0..g.len() {
                grads.head_w[(d, v)] += context[d] * g[v];
            }
        }
        let inv_len = 1.0 / ids.len() as f64;
        for &id in &ids {
            let mut row = grads.embed.row_mut(id as usize);
            row += &(&d_context * inv_len);
        }
        Ok(())
    }

    fn gradient_descent_step(&mut self, lr: f64) {
        let Some(g) = &self.grads else { return };
        self.embed.zip_mut_with(&g.embed, |p, &gr| *p -= lr * gr);
        self.head_w.zip_mut_with(&g.head_w, |p, &gr| *p -= lr * gr);
        self.head_b.zip_mut_with(&g.head_b, |p, &gr| *p -= lr * gr);
    }

    fn adamw_step(&mut self, hp: &AdamWParams) -> Result<()> {
        let total = self.param_count();
        let state = self.adamw.get_or_insert_with(|| AdamWState::new(total));
        if state.m.len() != total {
            return Err(Error::Training("optimizer state does not match model size".into()));
        }
        let g = self
            .grads
            .as_ref()
            .ok_or_else(|| Error::Training("adamw_step called before any backward pass".into()))?;
        let step = state.begin_step();
        let ne = self.embed.len();
        let nw = self.head_w.len();
        update_block(
            self.embed.as_slice_mut().unwrap(),
            g.embed.as_slice().unwrap(),
            state,
            0,
            step,
            hp,
        );
        update_block(
            self.head_w.as_slice_mut().unwrap(),
            g.head_w.as_slice().unwrap(),
            state,
            ne,
            step,
            hp,
        );
        update_block(
            self.head_b.as_slice_mut().unwrap(),
            g.head_b.as_slice().unwrap(),
            state,
            ne + nw,
            step,
            hp,
        );
        Ok(())
    }

    fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        let loaded = Self::load(dir)?;
        if loaded.meta.vocab_size != self.meta.vocab_size
            || loaded.meta.hidden_dim != self.meta.hidden_dim
        {
            return Err(Error::Config("checkpoint dimensions do not match model".into()));
        }
        self.embed = loaded.embed;
        self.head_w = loaded.head_w;
        self.head_b = loaded.head_b;
        Ok(())
    }

    fn save_train_state(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let state = self.adamw.clone().unwrap_or_else(|| AdamWState::new(self.param_count()));
        std::fs::write(dir.join("optimizer.json"), serde_json::to_string(&state)?)?;
        Ok(())
    }

    fn load_train_state(&mut self, dir: &Path) -> Result<()> {
        let raw = std::fs::read_to_string(dir.join("optimizer.json"))?;
        let state: AdamWState = serde_json::from_str(&raw)?;
        if state.m.len() != self.param_count() {
            return Err(Error::Training("optimizer state does not match model size".into()));
        }
        self.adamw = Some(state);
        Ok(())
    }
}
