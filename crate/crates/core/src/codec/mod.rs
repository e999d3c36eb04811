//! The stochastic semantic codec: encode a sentence to a Gaussian posterior,
//! sample a latent, decode a latent back to a sentence.
//!
//! The reference implementation is a desk-scale linear VAE
//! ([`LinearVae`]): a bag-of-token-counts encoder with affine maps to the
//! posterior mean and log-variance, and position-specific affine output heads
//! on the decoder side. It is hand-differentiable, which keeps gradient
//! checking against finite differences exact, while honoring the same
//! encode/sample/decode contract a full sequence model would.

mod checkpoint;
mod linear_vae;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use linear_vae::{LinearVae, Mat, VaeParams};
pub use train::{train, EvalMetrics, TrainError, TrainManifest, TrainOutcome, TrainingConfig};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

use crate::corpus::{self, TokenizedSentence, Vocabulary};

/// Log-variance is clamped to this range before exponentiation.
pub const LOG_VAR_CLAMP: f64 = 8.0;

/// Errors from codec operations.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("token index {index} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { index: usize, vocab_size: usize },
    #[error("latent vector contains non-finite components")]
    NonFiniteLatent,
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A point in the latent space `R^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        LatentVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(values: Vec<f64>) -> Self {
        LatentVector { values }
    }
}

/// Posterior statistics produced by the encoder: mean and log-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl EncoderOutput {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Per-dimension standard deviations `exp(log_var / 2)`.
    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// Reparameterized sample `z = mu + sigma ⊙ eps`, `eps ~ N(0, I)`.
    pub fn sample_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentVector {
        let values = self
            .mu
            .iter()
            .zip(&self.log_var)
            .map(|(&m, &lv)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + (0.5 * lv).exp() * eps
            })
            .collect();
        LatentVector { values }
    }
}

/// How the decoder picks tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled { temperature: f64 },
}

/// Which form of the free-bits KL term to use.
///
/// `Paper` is the literal printed form `-1/2 Σ_d max(1 + logσ² - μ² - σ², λ)`.
/// Its inner term is never positive, so for λ ≥ 0 the clamp always binds and
/// the term is constant in the parameters. `ClampedPositive` applies the floor
/// to the per-dimension KL itself, `Σ_d max(KL_d, λ)`, which is the form that
/// actually regularizes training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KlConvention {
    #[default]
    Paper,
    ClampedPositive,
}

/// Static codec configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Latent dimension D.
    pub latent_dim: usize,
    /// Maximum number of generated tokens after `<s>` (t_max); the framed
    /// sequence length is `max_decode_len + 1`.
    pub max_decode_len: usize,
    pub decode_mode: DecodeMode,
}

impl CodecConfig {
    pub fn new(latent_dim: usize, max_decode_len: usize) -> Self {
        assert!(latent_dim >= 1, "latent_dim must be >= 1");
        assert!(max_decode_len >= 2, "max_decode_len must be >= 2");
        CodecConfig {
            latent_dim,
            max_decode_len,
            decode_mode: DecodeMode::Greedy,
        }
    }

    /// Framed sequence length: `<s>` plus up to `max_decode_len` tokens.
    pub fn max_len(&self) -> usize {
        self.max_decode_len + 1
    }
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig::new(16, 19)
    }
}

/// The encode/sample/decode contract shared by real and stub codecs.
pub trait SemanticCodec: Send + Sync {
    fn latent_dim(&self) -> usize;
    fn vocab(&self) -> &Vocabulary;
    /// Framed sequence length used for tokenization.
    fn max_len(&self) -> usize;

    /// Maps a tokenized sentence to its posterior statistics. Deterministic.
    fn encode(&self, s: &TokenizedSentence) -> Result<EncoderOutput, CodecError>;

    /// Greedy decode: deterministic, stops at the first `</s>` or at t_max.
    fn decode(&self, z: &LatentVector) -> Result<TokenizedSentence, CodecError>;

    /// Temperature-sampled decode.
    fn decode_sampled(
        &self,
        z: &LatentVector,
        temperature: f64,
        rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError>;

    fn tokenize(&self, s: &str) -> TokenizedSentence {
        corpus::tokenize(s, self.vocab(), self.max_len())
    }

    fn encode_text(&self, s: &str) -> EncoderOutput {
        self.encode(&self.tokenize(s))
            .expect("tokenize output is always valid for the codec's own vocabulary")
    }

    fn decode_to_text(&self, z: &LatentVector) -> Result<String, CodecError> {
        let t = self.decode(z)?;
        corpus::detokenize(&t, self.vocab())
            .map_err(|e| CodecError::ShapeMismatch(format!("decode produced invalid ids: {e}")))
    }

    fn decode_with_mode(
        &self,
        z: &LatentVector,
        mode: DecodeMode,
        rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError> {
        match mode {
            DecodeMode::Greedy => self.decode(z),
            DecodeMode::Sampled { temperature } => self.decode_sampled(z, temperature, rng),
        }
    }
}

/// Wraps a codec and counts encode/decode calls. Used to verify the receiver
/// overhead accounting of the quality estimators.
pub struct CountingCodec<'a> {
    inner: &'a dyn SemanticCodec,
    encodes: AtomicUsize,
    decodes: AtomicUsize,
}

impl<'a> CountingCodec<'a> {
    pub fn new(inner: &'a dyn SemanticCodec) -> Self {
        CountingCodec {
            inner,
            encodes: AtomicUsize::new(0),
            decodes: AtomicUsize::new(0),
        }
    }

    pub fn encode_calls(&self) -> usize {
        self.encodes.load(Ordering::Relaxed)
    }

    pub fn decode_calls(&self) -> usize {
        self.decodes.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.encodes.store(0, Ordering::Relaxed);
        self.decodes.store(0, Ordering::Relaxed);
    }
}

impl SemanticCodec for CountingCodec<'_> {
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn vocab(&self) -> &Vocabulary {
        self.inner.vocab()
    }

    fn max_len(&self) -> usize {
        self.inner.max_len()
    }

    fn encode(&self, s: &TokenizedSentence) -> Result<EncoderOutput, CodecError> {
        self.encodes.fetch_add(1, Ordering::Relaxed);
        self.inner.encode(s)
    }

    fn decode(&self, z: &LatentVector) -> Result<TokenizedSentence, CodecError> {
        self.decodes.fetch_add(1, Ordering::Relaxed);
        self.inner.decode(z)
    }

    fn decode_sampled(
        &self,
        z: &LatentVector,
        temperature: f64,
        rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError> {
        self.decodes.fetch_add(1, Ordering::Relaxed);
        self.inner.decode_sampled(z, temperature, rng)
    }
}

/// The free-bits KL term in its literal printed form:
/// `-1/2 Σ_d max(1 + logσ_d² - μ_d² - σ_d², λ_free)`.
///
/// Note the floor sits inside the `-1/2` factor, so each dimension's
/// contribution to `-2·L_KL` is at least `λ_free` and the value can be
/// negative. See [`KlConvention`] for the regularizing alternative.
pub fn kl_free_bits(enc: &EncoderOutput, lambda_free: f64) -> f64 {
    debug_assert!(lambda_free >= 0.0);
    let mut acc = 0.0;
    for (&mu, &lv) in enc.mu.iter().zip(&enc.log_var) {
        let var = lv.exp();
        let inner = 1.0 + lv - mu * mu - var;
        acc += inner.max(lambda_free);
    }
    -0.5 * acc
}

/// The free-bits KL term under the chosen convention.
pub fn kl_divergence(enc: &EncoderOutput, lambda_free: f64, convention: KlConvention) -> f64 {
    match convention {
        KlConvention::Paper => kl_free_bits(enc, lambda_free),
        KlConvention::ClampedPositive => {
            let mut acc = 0.0;
            for (&mu, &lv) in enc.mu.iter().zip(&enc.log_var) {
                let var = lv.exp();
                let kl_d = 0.5 * (mu * mu + var - 1.0 - lv);
                acc += kl_d.max(lambda_free);
            }
            acc
        }
    }
}

/// Scalar knobs of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub beta: f64,
    pub lambda_free: f64,
    pub label_smoothing: f64,
    pub kl_convention: KlConvention,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            beta: 1.0,
            lambda_free: 0.25,
            label_smoothing: 0.1,
            kl_convention: KlConvention::Paper,
        }
    }
}

/// Reconstruction, KL, and combined loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean label-smoothed cross-entropy over non-padded positions, in nats.
    pub recon: f64,
    /// KL term under the configured convention, in nats.
    pub kl: f64,
    /// `recon + beta * kl`.
    pub total: f64,
    pub beta: f64,
}

/// Combined loss of one sentence: label-smoothed cross-entropy of the decoder
/// logits against the target positions (everything after `<s>` up to and
/// including `</s>`), plus `beta` times the free-bits KL term.
///
/// `logits[t]` scores target position `t`; rows beyond the last non-padded
/// position are ignored.
pub fn loss(
    logits: &[Vec<f64>],
    target: &TokenizedSentence,
    enc: &EncoderOutput,
    vocab: &Vocabulary,
    params: &LossParams,
) -> Result<LossBreakdown, CodecError> {
    let n_pos = target.framed_len(vocab).saturating_sub(1);
    if n_pos == 0 {
        return Err(CodecError::ShapeMismatch(
            "target has no positions after <s>".into(),
        ));
    }
    if logits.len() < n_pos {
        return Err(CodecError::ShapeMismatch(format!(
            "{} logit rows for {} target positions",
            logits.len(),
            n_pos
        )));
    }
    let mut recon = 0.0;
    for t in 0..n_pos {
        let row = &logits[t];
        let y = target.ids[t + 1];
        if y >= row.len() {
            return Err(CodecError::TokenOutOfRange {
                index: y,
                vocab_size: row.len(),
            });
        }
        recon += smoothed_cross_entropy(row, y, params.label_smoothing);
    }
    recon /= n_pos as f64;
    let kl = kl_divergence(enc, params.lambda_free, params.kl_convention);
    Ok(LossBreakdown {
        recon,
        kl,
        total: recon + params.beta * kl,
        beta: params.beta,
    })
}

/// Label-smoothed cross-entropy of one logit row against target index `y`:
/// the target distribution is `(1 - ls)·onehot(y) + ls/V`.
pub(crate) fn smoothed_cross_entropy(logits: &[f64], y: usize, label_smoothing: f64) -> f64 {
    let v = logits.len() as f64;
    let log_probs = log_softmax(logits);
    let uniform = label_smoothing / v;
    let mut ce = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        let q = if i == y {
            1.0 - label_smoothing + uniform
        } else {
            uniform
        };
        ce -= q * lp;
    }
    ce
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_z).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|lp| lp.exp()).collect()
}
