//! Receiver-side semantic quality estimators.
//!
//! Each metric maps a received latent (plus codec access) to a score
//! `q ∈ [0, 1]`, higher meaning better. The receiver never sees the source
//! sentence, so everything is derived from the received latent and the
//! codec's own round trips:
//!
//! * A (VAE uncertainty) and D (latent distance) decode once and re-encode
//!   the result: 1 decode + 1 encode.
//! * B (self-consistency), E (text BLEU), and F (text similarity) share a
//!   full round trip — `ŝ₁ = dec(z̃)`, `μ′ = enc(ŝ₁)`, `ŝ₂ = dec(μ′)` —
//!   for 2 decodes + 1 encode. E and F compare `ŝ₁` with `ŝ₂` at the text
//!   level; B compares the received latent with `μ′` at the latent level.
//! * C (decoder entropy) runs N sampled decode passes: N decodes, 0 encodes.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, EncoderOutput, LatentVector, SemanticCodec};
use crate::corpus::{self, TokenizedSentence};
use crate::metrics;

/// Errors from quality estimation.
#[derive(Debug, Error)]
pub enum QualityError {
    #[error("invalid quality config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricTag {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl MetricTag {
    pub const ALL: [MetricTag; 6] = [
        MetricTag::A,
        MetricTag::B,
        MetricTag::C,
        MetricTag::D,
        MetricTag::E,
        MetricTag::F,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricTag::A => "A",
            MetricTag::B => "B",
            MetricTag::C => "C",
            MetricTag::D => "D",
            MetricTag::E => "E",
            MetricTag::F => "F",
        }
    }

    /// Long name as used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            MetricTag::A => "vae-uncertainty",
            MetricTag::B => "self-consistency",
            MetricTag::C => "decoder-entropy",
            MetricTag::D => "latent-distance",
            MetricTag::E => "text-bleu",
            MetricTag::F => "text-similarity",
        }
    }
}

impl std::str::FromStr for MetricTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(MetricTag::A),
            "B" => Ok(MetricTag::B),
            "C" => Ok(MetricTag::C),
            "D" => Ok(MetricTag::D),
            "E" => Ok(MetricTag::E),
            "F" => Ok(MetricTag::F),
            other => Err(format!("unknown quality metric {other:?} (expected A..F)")),
        }
    }
}

impl std::fmt::Display for MetricTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A quality estimate carrying its metric tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub value: f64,
    pub metric: MetricTag,
}

/// Estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub metric: MetricTag,
    /// Number of decode passes for metric C.
    pub n_passes: usize,
    /// Sampling temperature for metric C passes; 0 selects greedy passes,
    /// which makes the metric constant at 1 (degenerate but configurable).
    pub temperature: f64,
    /// Division-by-zero guard in metric D.
    pub epsilon: f64,
    /// Whether metric E's BLEU-1 applies the brevity penalty.
    pub bleu_brevity_penalty: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            metric: MetricTag::B,
            n_passes: 5,
            temperature: 1.0,
            epsilon: 1e-8,
            bleu_brevity_penalty: true,
        }
    }
}

impl QualityConfig {
    pub fn with_metric(metric: MetricTag) -> Self {
        QualityConfig {
            metric,
            ..QualityConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        if self.metric == MetricTag::C && self.n_passes < 2 {
            return Err(QualityError::InvalidConfig(format!(
                "metric C needs n_passes >= 2, got {}",
                self.n_passes
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(QualityError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(QualityError::InvalidConfig(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

fn decode_text(
    codec: &dyn SemanticCodec,
    z: &LatentVector,
) -> Result<(TokenizedSentence, String), QualityError> {
    let tokens = codec.decode(z)?;
    let text = corpus::detokenize(&tokens, codec.vocab())
        .map_err(|e| QualityError::InvalidConfig(format!("decode produced invalid ids: {e}")))?;
    Ok((tokens, text))
}

/// First decode + re-encode shared by A and D.
fn reencode(
    codec: &dyn SemanticCodec,
    z: &LatentVector,
) -> Result<EncoderOutput, QualityError> {
    let (tokens, _) = decode_text(codec, z)?;
    Ok(codec.encode(&tokens)?)
}

/// Full round trip shared by B, E, and F: `ŝ₁ = dec(z̃)`, `μ′ = enc(ŝ₁)`,
/// `ŝ₂ = dec(μ′)`.
struct RoundTrip {
    s1: String,
    mu_prime: Vec<f64>,
    s2: String,
}

fn round_trip(codec: &dyn SemanticCodec, z: &LatentVector) -> Result<RoundTrip, QualityError> {
    let (tokens1, s1) = decode_text(codec, z)?;
    let enc = codec.encode(&tokens1)?;
    let mu_prime = enc.mu;
    let (_, s2) = decode_text(codec, &LatentVector::new(mu_prime.clone()))?;
    Ok(RoundTrip { s1, mu_prime, s2 })
}

/// Normalized distance penalty `δ(u, v) = max(0, 1 − ‖u−v‖₂/√D)`. Symmetric.
pub fn distance_penalty(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let dist = u
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (1.0 - dist / (u.len() as f64).sqrt()).max(0.0)
}

/// Metric A — VAE uncertainty: `q = max(0, 1 − mean(σ))`, σ from re-encoding
/// the decoded sentence.
pub fn metric_a_vae_uncertainty(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
) -> Result<QualityScore, QualityError> {
    let enc = reencode(codec, z)?;
    let sigma = enc.sigma();
    let mean_sigma = sigma.iter().sum::<f64>() / sigma.len() as f64;
    Ok(QualityScore {
        value: (1.0 - mean_sigma).max(0.0),
        metric: MetricTag::A,
    })
}

/// Metric B — self-consistency: `q = cos(z̃, μ′) · δ(z̃, μ′)` where μ′ comes
/// from re-encoding the decode of z̃. A negative cosine (or an undefined one
/// from a zero-norm vector) clamps to 0.
pub fn metric_b_self_consistency(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
) -> Result<QualityScore, QualityError> {
    let rt = round_trip(codec, z)?;
    let cos = metrics::cosine(&z.values, &rt.mu_prime).max(0.0);
    let value = cos * distance_penalty(&z.values, &rt.mu_prime);
    Ok(QualityScore {
        value,
        metric: MetricTag::B,
    })
}

/// Metric C — decoder entropy: fraction of N sampled decode passes whose
/// detokenized text equals the first pass's.
pub fn metric_c_decoder_entropy(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
    n_passes: usize,
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Result<QualityScore, QualityError> {
    if n_passes < 2 {
        return Err(QualityError::InvalidConfig(format!(
            "metric C needs n_passes >= 2, got {n_passes}"
        )));
    }
    let mut texts = Vec::with_capacity(n_passes);
    for _ in 0..n_passes {
        let tokens = if temperature == 0.0 {
            codec.decode(z)?
        } else {
            codec.decode_sampled(z, temperature, rng)?
        };
        let text = corpus::detokenize(&tokens, codec.vocab()).map_err(|e| {
            QualityError::InvalidConfig(format!("decode produced invalid ids: {e}"))
        })?;
        texts.push(text);
    }
    let agree = texts.iter().filter(|t| **t == texts[0]).count();
    Ok(QualityScore {
        value: agree as f64 / n_passes as f64,
        metric: MetricTag::C,
    })
}

/// Metric D — latent distance: `q = max(0, 1 − ‖z̃ − μ‖/(‖μ‖ + ε))`, μ from
/// re-encoding the decoded sentence.
pub fn metric_d_latent_distance(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
    epsilon: f64,
) -> Result<QualityScore, QualityError> {
    if !(epsilon > 0.0) {
        return Err(QualityError::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let enc = reencode(codec, z)?;
    let mu = &enc.mu;
    let dist = z
        .values
        .iter()
        .zip(mu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let mu_norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(QualityScore {
        value: (1.0 - dist / (mu_norm + epsilon)).max(0.0),
        metric: MetricTag::D,
    })
}

/// Metric E — text BLEU: unsmoothed BLEU-1 of the round trip `(ŝ₁, ŝ₂)`.
pub fn metric_e_text_bleu(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
    brevity_penalty: bool,
) -> Result<QualityScore, QualityError> {
    let rt = round_trip(codec, z)?;
    let cand = corpus::split_words(&rt.s1);
    let reference = corpus::split_words(&rt.s2);
    let bleu = metrics::bleu_with_options(&cand, &reference, 1, false, brevity_penalty);
    Ok(QualityScore {
        value: bleu.value,
        metric: MetricTag::E,
    })
}

/// Metric F — text similarity: Jaccard index of the round-trip token sets.
pub fn metric_f_text_similarity(
    z: &LatentVector,
    codec: &dyn SemanticCodec,
) -> Result<QualityScore, QualityError> {
    let rt = round_trip(codec, z)?;
    let a = corpus::split_words(&rt.s1);
    let b = corpus::split_words(&rt.s2);
    Ok(QualityScore {
        value: metrics::jaccard(&a, &b).value,
        metric: MetricTag::F,
    })
}

/// Dispatches to the configured metric.
pub fn estimate(
    z: &LatentVector,
    cfg: &QualityConfig,
    codec: &dyn SemanticCodec,
    rng: &mut dyn RngCore,
) -> Result<QualityScore, QualityError> {
    cfg.validate()?;
    match cfg.metric {
        MetricTag::A => metric_a_vae_uncertainty(z, codec),
        MetricTag::B => metric_b_self_consistency(z, codec),
        MetricTag::C => metric_c_decoder_entropy(z, codec, cfg.n_passes, cfg.temperature, rng),
        MetricTag::D => metric_d_latent_distance(z, codec, cfg.epsilon),
        MetricTag::E => metric_e_text_bleu(z, codec, cfg.bleu_brevity_penalty),
        MetricTag::F => metric_f_text_similarity(z, codec),
    }
}
