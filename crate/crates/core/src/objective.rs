//! Attribute-conditioned phrase distributions and the divergence loss.
//!
//! A prompt is scored by building, for every attribute of a tuple, the cloze
//! input `[CLS] attribute prompt-body [MASK]x n [SEP]` and reading one logit
//! row per mask position. A stereotype phrase of token length `n` gets the
//! score `sum_l logits[l][phrase_token_l]`; softmax over the phrases of the
//! length-`n` bucket yields one distribution per attribute. The loss of the
//! prompt is the sum over tuples and populated bucket lengths of the
//! Jensen-Shannon divergence between the attribute distributions.
//!
//! The same module provides the exact gradient of that loss with respect to
//! the mask logits, which is all a trainable backend needs for fine-tuning.

use ndarray::Array2;

use crate::backend::{MaskedLanguageModel, ModelMeta, TokenSequence};
use crate::error::{Error, Result};
use crate::ingest::AttributeTuples;

/// Additive smoothing applied inside every divergence logarithm.
pub const LOG_SMOOTHING: f64 = 1e-12;

/// A prompt body: searched trigger tokens placed between the attribute slot
/// and the mask block. May be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptCandidate {
    tokens: Vec<u32>,
}

impl PromptCandidate {
    pub fn new(tokens: Vec<u32>, meta: &ModelMeta) -> Result<Self> {
        for &t in &tokens {
            if t as usize >= meta.vocab_size {
                return Err(Error::Domain(format!(
                    "prompt token {t} is outside vocab of size {}",
                    meta.vocab_size
                )));
            }
            if meta.special.contains(t) {
                return Err(Error::Contract(format!(
                    "prompt token {t} is a special token"
                )));
            }
        }
        Ok(Self { tokens })
    }

    pub fn empty() -> Self {
        Self { tokens: Vec::new() }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// This prompt extended by one trailing token (for beam expansion).
    pub fn extended(&self, token: u32) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        Self { tokens }
    }
}

/// One stereotype phrase inside a length bucket.
#[derive(Debug, Clone)]
pub struct BucketPhrase {
    pub text: String,
    pub token_ids: Vec<u32>,
    /// Multiplicity weight; enters the bucket softmax as `ln(weight)`.
    pub weight: f64,
}

/// All stereotype phrases of one tokenized length; the support of one
/// distribution.
#[derive(Debug, Clone)]
pub struct PhraseBucket {
    length: usize,
    phrases: Vec<BucketPhrase>,
    support_key: u64,
}

impl PhraseBucket {
    pub fn new(length: usize, phrases: Vec<BucketPhrase>) -> Result<Self> {
        if length == 0 {
            return Err(Error::Contract("bucket length must be at least 1".into()));
        }
        if phrases.is_empty() {
            return Err(Error::Contract("bucket must contain at least one phrase".into()));
        }
        for p in &phrases {
            if p.token_ids.len() != length {
                return Err(Error::Contract(format!(
                    "phrase '{}' tokenizes to {} tokens, bucket expects {length}",
                    p.text,
                    p.token_ids.len()
                )));
            }
            if !(p.weight > 0.0) {
                return Err(Error::Contract(format!(
                    "phrase '{}' has non-positive weight {}",
                    p.text, p.weight
                )));
            }
        }
        let mut key: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: u64| {
            key ^= x;
            key = key.wrapping_mul(0x100_0000_01b3);
        };
        mix(length as u64);
        for p in &phrases {
            for &id in &p.token_ids {
                mix(id as u64 + 1);
            }
            mix(u64::MAX);
        }
        Ok(Self {
            length,
            phrases,
            support_key: key,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn phrases(&self) -> &[BucketPhrase] {
        &self.phrases
    }

    pub fn support_size(&self) -> usize {
        self.phrases.len()
    }
}

/// Probability vector over the phrases of one bucket.
#[derive(Debug, Clone)]
pub struct PhraseDistribution {
    bucket_length: usize,
    support_key: u64,
    probs: Vec<f64>,
}

impl PhraseDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bucket_length(&self) -> usize {
        self.bucket_length
    }

    /// Build directly from probabilities (used by oracles and the mixture
    /// distribution). Validates normalization.
    pub fn from_probs(bucket_length: usize, support_key: u64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Contract("distribution support must be non-empty".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "probabilities must be nonnegative and sum to 1 (got {total})"
            )));
        }
        Ok(Self {
            bucket_length,
            support_key,
            probs,
        })
    }

    fn check_same_support(&self, other: &Self) -> Result<()> {
        if self.bucket_length != other.bucket_length
            || self.support_key != other.support_key
            || self.probs.len() != other.probs.len()
        {
            return Err(Error::Contract(
                "distributions are defined over different supports".into(),
            ));
        }
        Ok(())
    }
}

/// Cloze input for (attribute, prompt body, `n` masks):
/// `[CLS] attribute prompt [MASK]...[MASK] [SEP]`.
pub fn build_prompt(
    backend: &dyn MaskedLanguageModel,
    attribute: &str,
    prompt: &PromptCandidate,
    n: usize,
) -> Result<TokenSequence> {
    if n == 0 {
        return Err(Error::Contract("mask block length must be at least 1".into()));
    }
    let meta = backend.meta();
    let attr_ids = backend.encode_content(attribute)?;
    if attr_ids.iter().any(|&id| id == meta.special.mask) {
        return Err(Error::Contract(format!(
            "attribute '{attribute}' must not contain mask tokens"
        )));
    }
    let mut ids = Vec::with_capacity(attr_ids.len() + prompt.len() + n + 2);
    ids.push(meta.special.cls);
    ids.extend(attr_ids);
    ids.extend_from_slice(prompt.tokens());
    ids.extend(std::iter::repeat(meta.special.mask).take(n));
    ids.push(meta.special.sep);
    TokenSequence::new(ids, meta)
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-phrase scores for one (prompt, attribute, bucket) triple, from a
/// single forward pass. Score = summed mask-position logits + ln(weight).
fn bucket_scores(logits: &Array2<f64>, bucket: &PhraseBucket) -> Result<Vec<f64>> {
    if logits.nrows() != bucket.length {
        return Err(Error::Contract(format!(
            "logit rows {} do not match bucket length {}",
            logits.nrows(),
            bucket.length
        )));
    }
    let mut scores = Vec::with_capacity(bucket.phrases.len());
    for phrase in &bucket.phrases {
        let mut s = phrase.weight.ln();
        for (l, &tok) in phrase.token_ids.iter().enumerate() {
            s += logits[(l, tok as usize)];
        }
        if !s.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite score for phrase '{}'",
                phrase.text
            )));
        }
        scores.push(s);
    }
    Ok(scores)
}

/// Distribution over a bucket's phrases conditioned on (prompt, attribute).
pub fn phrase_distribution(
    backend: &dyn MaskedLanguageModel,
    prompt: &PromptCandidate,
    attribute: &str,
    bucket: &PhraseBucket,
) -> Result<PhraseDistribution> {
    let seq = build_prompt(backend, attribute, prompt, bucket.length)?;
    let logits = backend.mask_logits(&seq)?;
    distribution_from_logits(&logits, bucket)
}

/// Same as [`phrase_distribution`] but starting from already-computed logits.
pub fn distribution_from_logits(
    logits: &Array2<f64>,
    bucket: &PhraseBucket,
) -> Result<PhraseDistribution> {
    let scores = bucket_scores(logits, bucket)?;
    Ok(PhraseDistribution {
        bucket_length: bucket.length,
        support_key: bucket.support_key,
        probs: softmax(&scores),
    })
}

/// Kullback-Leibler divergence `sum p ln((p+eps)/(q+eps))`, natural log.
pub fn kld(p: &PhraseDistribution, q: &PhraseDistribution) -> Result<f64> {
    p.check_same_support(q)?;
    let mut total = 0.0;
    for (pi, qi) in p.probs.iter().zip(&q.probs) {
        total += pi * ((pi + LOG_SMOOTHING) / (qi + LOG_SMOOTHING)).ln();
    }
    Ok(total)
}

/// Jensen-Shannon divergence: mean KLD of each distribution to the
/// elementwise mean. Bounded by `ln m` for `m` distributions.
pub fn jsd(dists: &[PhraseDistribution]) -> Result<f64> {
    let mixture = jsd_mixture(dists)?;
    let mut total = 0.0;
    for d in dists {
        total += kld(d, &mixture)?;
    }
    Ok(total / dists.len() as f64)
}

fn jsd_mixture(dists: &[PhraseDistribution]) -> Result<PhraseDistribution> {
    if dists.len() < 2 {
        return Err(Error::Contract("jsd requires at least two distributions".into()));
    }
    for d in &dists[1..] {
        dists[0].check_same_support(d)?;
    }
    let n = dists[0].probs.len();
    let mut mix = vec![0.0; n];
    for d in dists {
        for (m, p) in mix.iter_mut().zip(&d.probs) {
            *m += p;
        }
    }
    let inv = 1.0 / dists.len() as f64;
    for m in &mut mix {
        *m *= inv;
    }
    Ok(PhraseDistribution {
        bucket_length: dists[0].bucket_length,
        support_key: dists[0].support_key,
        probs: mix,
    })
}

/// Total bias loss of a prompt: sum over attribute tuples and populated
/// bucket lengths of the JSD between the per-attribute distributions.
pub fn prompt_loss(
    backend: &dyn MaskedLanguageModel,
    prompt: &PromptCandidate,
    tuples: &AttributeTuples,
    buckets: &[PhraseBucket],
) -> Result<f64> {
    if tuples.is_empty() {
        return Err(Error::Contract("attribute tuple list is empty".into()));
    }
    if buckets.is_empty() {
        return Err(Error::Contract("phrase set has no populated buckets".into()));
    }
    let mut loss = 0.0;
    for tuple in &tuples.tuples {
        for bucket in buckets {
            let dists = tuple
                .iter()
                .map(|attr| phrase_distribution(backend, prompt, attr, bucket))
                .collect::<Result<Vec<_>>>()?;
            loss += jsd(&dists)?;
        }
    }
    Ok(loss)
}

/// JSD of one (prompt, tuple, bucket) cell together with the exact gradient
/// of the smoothed JSD with respect to each member's phrase scores.
///
/// With `P_a = softmax(s_a)`, `M = mean_a P_a` and
/// `D_a(i) = (1/m)[ln((P_a(i)+eps)/(M(i)+eps)) + P_a(i)/(P_a(i)+eps) - M(i)/(M(i)+eps)]`,
/// the score gradient is `g_a(i) = P_a(i) (D_a(i) - sum_j P_a(j) D_a(j))`.
pub fn jsd_with_score_grads(dists: &[PhraseDistribution]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mixture = jsd_mixture(dists)?;
    let m = dists.len() as f64;
    let n = mixture.probs.len();
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(dists.len());
    for d in dists {
        value += kld(d, &mixture)?;
        let mut dprob = vec![0.0; n];
        for i in 0..n {
            let p = d.probs[i];
            let mix = mixture.probs[i];
            dprob[i] = (((p + LOG_SMOOTHING) / (mix + LOG_SMOOTHING)).ln()
                + p / (p + LOG_SMOOTHING)
                - mix / (mix + LOG_SMOOTHING))
                / m;
        }
        let dot: f64 = d.probs.iter().zip(&dprob).map(|(p, g)| p * g).sum();
        let g: Vec<f64> = d
            .probs
            .iter()
            .zip(&dprob)
            .map(|(p, dp)| p * (dp - dot))
            .collect();
        grads.push(g);
    }
    Ok((value / m, grads))
}

/// Spread per-phrase score gradients back onto the mask-logit matrix.
pub fn scatter_score_grads(
    bucket: &PhraseBucket,
    dscores: &[f64],
    vocab_size: usize,
) -> Result<Array2<f64>> {
    if dscores.len() != bucket.phrases.len() {
        return Err(Error::Contract(
            "score gradient length does not match bucket support".into(),
        ));
    }
    let mut dlogits = Array2::zeros((bucket.length, vocab_size));
    for (phrase, &g) in bucket.phrases.iter().zip(dscores) {
        for (l, &tok) in phrase.token_ids.iter().enumerate() {
            dlogits[(l, tok as usize)] += g;
        }
    }
    Ok(dlogits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::toy::ToyBackend;

    fn dist(probs: Vec<f64>) -> PhraseDistribution {
        PhraseDistribution::from_probs(1, 7, probs).unwrap()
    }

    #[test]
    fn kld_of_identical_distributions_is_zero() {
        let p = dist(vec![0.3, 0.7]);
        assert!(kld(&p, &p).unwrap().abs() < 1e-9);
    }

    #[test]
    fn kld_matches_direct_arithmetic() {
        // 0.5 ln 2 + 0.5 ln(2/3)
        let p = dist(vec![0.5, 0.5]);
        let q = dist(vec![0.25, 0.75]);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kld(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn kld_with_zero_mass_entry_is_smoothed() {
        let p = dist(vec![1.0, 0.0]);
        let q = dist(vec![0.5, 0.5]);
        assert!((kld(&p, &q).unwrap() - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn kld_rejects_support_mismatch() {
        let p = dist(vec![0.5, 0.5]);
        let q = PhraseDistribution::from_probs(1, 8, vec![0.5, 0.5]).unwrap();
        assert!(kld(&p, &q).is_err());
    }

    #[test]
    fn jsd_of_identical_distributions_is_zero() {
        let p = dist(vec![0.2, 0.8]);
        assert!(jsd(&[p.clone(), p]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn jsd_of_disjoint_distributions_is_ln_two() {
        let p1 = dist(vec![1.0, 0.0]);
        let p2 = dist(vec![0.0, 1.0]);
        assert!((jsd(&[p1, p2]).unwrap() - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn jsd_is_symmetric_in_its_arguments() {
        let p1 = dist(vec![0.9, 0.1]);
        let p2 = dist(vec![0.4, 0.6]);
        let a = jsd(&[p1.clone(), p2.clone()]).unwrap();
        let b = jsd(&[p2, p1]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    fn toy_with_planted_scores() -> (ToyBackend, PhraseBucket) {
        // Two length-2 phrases with hand-set scores {2.0, 0.0}: zero the
        // embeddings so the context vector is zero and only the head bias
        // feeds the logits.
        let mut toy = ToyBackend::new(1, 16, 4).unwrap();
        toy.zero_head();
        toy.zero_embeddings();
        let a = [5u32, 6u32];
        let b = [7u32, 8u32];
        toy.set_head_column(a[0], &[0.0; 4], 1.5);
        toy.set_head_column(a[1], &[0.0; 4], 0.5);
        toy.set_head_column(b[0], &[0.0; 4], 0.0);
        toy.set_head_column(b[1], &[0.0; 4], 0.0);
        let bucket = PhraseBucket::new(
            2,
            vec![
                BucketPhrase {
                    text: "w5 w6".into(),
                    token_ids: a.to_vec(),
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w7 w8".into(),
                    token_ids: b.to_vec(),
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        (toy, bucket)
    }

    #[test]
    fn two_phrase_bucket_with_score_gap_two_matches_hand_softmax() {
        let (toy, bucket) = toy_with_planted_scores();
        let d = phrase_distribution(&toy, &PromptCandidate::empty(), "w9", &bucket).unwrap();
        // scores {1.5+0.5, 0.0} = {2, 0} -> softmax {e^2/(e^2+1), 1/(e^2+1)}
        let e2 = 2f64.exp();
        assert!((d.probs()[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((d.probs()[1] - 1.0 / (e2 + 1.0)).abs() < 1e-12);
        assert!((d.probs()[0] - 0.8808).abs() < 1e-4);
        assert!((d.probs()[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn all_equal_logits_give_uniform_distribution() {
        let mut toy = ToyBackend::new(2, 16, 4).unwrap();
        toy.zero_head();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w6".into(),
                    token_ids: vec![6],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w7".into(),
                    token_ids: vec![7],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let d = phrase_distribution(&toy, &PromptCandidate::empty(), "w9", &bucket).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_bucket_reduces_to_single_token_softmax() {
        let toy = ToyBackend::new(3, 16, 4).unwrap();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w8".into(),
                    token_ids: vec![8],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let prompt = PromptCandidate::empty();
        let seq = build_prompt(&toy, "w9", &prompt, 1).unwrap();
        let logits = toy.mask_logits(&seq).unwrap();
        let direct = softmax(&[logits[(0, 5)], logits[(0, 8)]]);
        let d = phrase_distribution(&toy, &prompt, "w9", &bucket).unwrap();
        for (got, want) in d.probs().iter().zip(&direct) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn build_prompt_places_attribute_body_and_trailing_masks() {
        let toy = ToyBackend::new(4, 32, 4).unwrap();
        let prompt = PromptCandidate::new(vec![10, 11], toy.meta()).unwrap();
        for n in 1..=3 {
            let seq = build_prompt(&toy, "w9", &prompt, n).unwrap();
            assert_eq!(seq.mask_positions().len(), n);
            let len = seq.len();
            // [CLS] w9 10 11 [MASK]*n [SEP]
            assert_eq!(len, 4 + n + 1);
            assert_eq!(seq.ids()[0], toy.meta().special.cls);
            assert_eq!(seq.ids()[1], 9);
            assert_eq!(&seq.ids()[2..4], &[10, 11]);
            assert_eq!(seq.ids()[len - 1], toy.meta().special.sep);
            for (k, &pos) in seq.mask_positions().iter().enumerate() {
                assert_eq!(pos, 4 + k);
            }
        }
    }

    #[test]
    fn empty_prompt_with_one_mask_is_the_degenerate_cloze() {
        let toy = ToyBackend::new(5, 32, 4).unwrap();
        let seq = build_prompt(&toy, "w9", &PromptCandidate::empty(), 1).unwrap();
        assert_eq!(seq.ids().len(), 4);
        assert_eq!(seq.mask_positions(), &[2]);
    }

    #[test]
    fn attribute_invariant_backend_has_zero_loss() {
        let mut toy = ToyBackend::new(6, 32, 4).unwrap();
        let he = toy.token_to_id("he").unwrap();
        let she = toy.token_to_id("she").unwrap();
        let row = toy.embedding_row(he);
        toy.set_embedding_row(she, &row);
        let tuples = AttributeTuples::parse("he,she\n").unwrap();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w6".into(),
                    token_ids: vec![6],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let loss = prompt_loss(&toy, &PromptCandidate::empty(), &tuples, &[bucket]).unwrap();
        assert!(loss.abs() < 1e-6, "expected zero loss, got {loss}");
    }

    #[test]
    fn single_tuple_single_bucket_loss_is_one_jsd() {
        let toy = ToyBackend::new(7, 32, 4).unwrap();
        let tuples = AttributeTuples::parse("he,she\n").unwrap();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w6".into(),
                    token_ids: vec![6],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let prompt = PromptCandidate::empty();
        let dists: Vec<_> = tuples.tuples[0]
            .iter()
            .map(|a| phrase_distribution(&toy, &prompt, a, &bucket).unwrap())
            .collect();
        let expected = jsd(&dists).unwrap();
        let loss = prompt_loss(&toy, &prompt, &tuples, &[bucket]).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn prompt_loss_is_additive_over_tuples() {
        let toy = ToyBackend::new(8, 32, 4).unwrap();
        let both = AttributeTuples::parse("he,she\nman,woman\n").unwrap();
        let first = AttributeTuples::parse("he,she\n").unwrap();
        let second = AttributeTuples::parse("man,woman\n").unwrap();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 1.0,
                },
                BucketPhrase {
                    text: "w6".into(),
                    token_ids: vec![6],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let prompt = PromptCandidate::empty();
        let all = prompt_loss(&toy, &prompt, &both, std::slice::from_ref(&bucket)).unwrap();
        let a = prompt_loss(&toy, &prompt, &first, std::slice::from_ref(&bucket)).unwrap();
        let b = prompt_loss(&toy, &prompt, &second, std::slice::from_ref(&bucket)).unwrap();
        assert!((all - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn weighted_phrases_shift_the_softmax_by_log_multiplicity() {
        let (toy, _) = toy_with_planted_scores();
        let bucket = PhraseBucket::new(
            1,
            vec![
                BucketPhrase {
                    text: "w5".into(),
                    token_ids: vec![5],
                    weight: 3.0,
                },
                BucketPhrase {
                    text: "w6".into(),
                    token_ids: vec![6],
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let d = phrase_distribution(&toy, &PromptCandidate::empty(), "w9", &bucket).unwrap();
        // Logits for ids 5 and 6 are 1.5 and 0.5; weight 3 multiplies the
        // first exponential by 3.
        let (e5, e6) = (1.5f64.exp(), 0.5f64.exp());
        let want = 3.0 * e5 / (3.0 * e5 + e6);
        assert!((d.probs()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn jsd_score_grads_match_finite_differences_of_scores() {
        // Perturb raw scores directly and compare the analytic gradient.
        let scores_a = vec![0.4, -1.2, 0.7];
        let scores_b = vec![-0.3, 0.9, 0.1];
        let value_of = |sa: &[f64], sb: &[f64]| {
            let da = PhraseDistribution {
                bucket_length: 1,
                support_key: 1,
                probs: softmax(sa),
            };
            let db = PhraseDistribution {
                bucket_length: 1,
                support_key: 1,
                probs: softmax(sb),
            };
            jsd(&[da, db]).unwrap()
        };
        let da = PhraseDistribution {
            bucket_length: 1,
            support_key: 1,
            probs: softmax(&scores_a),
        };
        let db = PhraseDistribution {
            bucket_length: 1,
            support_key: 1,
            probs: softmax(&scores_b),
        };
        let (_, grads) = jsd_with_score_grads(&[da, db]).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = scores_a.clone();
            let mut minus = scores_a.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (value_of(&plus, &scores_b) - value_of(&minus, &scores_b)) / (2.0 * h);
            assert!(
                (fd - grads[0][i]).abs() < 1e-8,
                "coordinate {i}: fd {fd} vs analytic {}",
                grads[0][i]
            );
            let mut plus_b = scores_b.clone();
            let mut minus_b = scores_b.clone();
            plus_b[i] += h;
            minus_b[i] -= h;
            let fd_b = (value_of(&scores_a, &plus_b) - value_of(&scores_a, &minus_b)) / (2.0 * h);
            assert!((fd_b - grads[1][i]).abs() < 1e-8);
        }
    }
}
