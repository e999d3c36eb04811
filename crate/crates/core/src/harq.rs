//! Retransmission sessions: threshold-gated stop-and-wait HARQ over the
//! latent channel.
//!
//! One session transmits a sentence's latent up to `k_max` times. After each
//! attempt the receiver scores the received latent with the configured
//! quality metric; the first score at or above `q_th` acknowledges the
//! sentence and stops the loop. All received attempts — not just the last —
//! are then fused by the configured combiner and decoded once.
//!
//! Transmitter behavior follows the combiner: chase combining retransmits
//! one sampled latent (identical copies), every other method samples a fresh
//! latent from the encoder posterior on each attempt.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Channel, ChannelError};
use crate::codec::{CodecError, LatentVector, SemanticCodec};
use crate::combining::{self, CombineError, CombinedLatent, CombinerMethod, CombinerSpec, ReceivedAttempt};
use crate::quality::{self, QualityConfig, QualityError};

#[derive(Debug, Error)]
pub enum HarqError {
    #[error("invalid harq config: {0}")]
    InvalidConfig(String),
    #[error("tx codec has latent dim {tx}, rx codec has {rx}")]
    CodecMismatch { tx: usize, rx: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Session policy: stopping threshold, attempt budget, and the receiver's
/// quality and combining choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqConfig {
    /// ACK threshold. Values outside [0, 1] are allowed deliberately:
    /// 0 acknowledges the first attempt, anything above 1 forces `k_max`.
    pub q_th: f64,
    pub k_max: usize,
    pub quality: QualityConfig,
    pub combiner: CombinerSpec,
}

impl Default for HarqConfig {
    fn default() -> Self {
        HarqConfig {
            q_th: 0.85,
            k_max: 5,
            quality: QualityConfig::default(),
            combiner: CombinerSpec::default(),
        }
    }
}

impl HarqConfig {
    pub fn validate(&self) -> Result<(), HarqError> {
        if !self.q_th.is_finite() {
            return Err(HarqError::InvalidConfig(format!(
                "q_th must be finite, got {}",
                self.q_th
            )));
        }
        if self.k_max < 1 {
            return Err(HarqError::InvalidConfig("k_max must be >= 1".into()));
        }
        self.quality
            .validate()
            .map_err(|e| HarqError::InvalidConfig(e.to_string()))
    }
}

/// Everything observable from one session.
#[derive(Debug, Clone)]
pub struct HarqSessionResult {
    /// All received attempts in transmission order (`k` is 1-based).
    pub attempts: Vec<ReceivedAttempt>,
    /// Attempt index that met the threshold, if any.
    pub ack_at: Option<usize>,
    /// Total transmissions used; equals `attempts.len()`.
    pub n_transmissions: usize,
    pub combined: CombinedLatent,
    /// Greedy decode of the combined latent under the receive codec.
    pub decoded: String,
}

enum StopRule {
    Threshold(f64),
    Forced,
}

fn run_inner(
    sentence: &str,
    tx: &dyn SemanticCodec,
    rx: &dyn SemanticCodec,
    channel: &Channel,
    cfg: &HarqConfig,
    budget: usize,
    stop: StopRule,
    rng: &mut dyn RngCore,
) -> Result<HarqSessionResult, HarqError> {
    cfg.validate()?;
    if tx.latent_dim() != rx.latent_dim() {
        return Err(HarqError::CodecMismatch {
            tx: tx.latent_dim(),
            rx: rx.latent_dim(),
        });
    }
    if budget < 1 {
        return Err(HarqError::InvalidConfig(
            "attempt budget must be >= 1".into(),
        ));
    }

    let enc = tx.encode(&tx.tokenize(sentence))?;
    let chase_latent: Option<LatentVector> = if cfg.combiner.method == CombinerMethod::Chase {
        Some(enc.sample_latent(rng))
    } else {
        None
    };

    let mut attempts: Vec<ReceivedAttempt> = Vec::with_capacity(budget);
    let mut ack_at = None;
    for k in 1..=budget {
        let z = match &chase_latent {
            Some(z) => z.clone(),
            None => enc.sample_latent(rng),
        };
        let received = channel.transmit(&z, rng)?;
        let q = quality::estimate(&received, &cfg.quality, rx, rng)?;
        attempts.push(ReceivedAttempt {
            latent: received,
            quality: q,
            k,
        });
        if let StopRule::Threshold(th) = stop {
            if q.value >= th {
                ack_at = Some(k);
                break;
            }
        }
    }

    let combined = combining::combine(&attempts, &cfg.combiner)?;
    let decoded = rx.decode_to_text(&combined.latent)?;
    let n_transmissions = attempts.len();
    Ok(HarqSessionResult {
        attempts,
        ack_at,
        n_transmissions,
        combined,
        decoded,
    })
}

/// Runs one adaptive session: stops at the first attempt whose quality is at
/// least `cfg.q_th`, or after `cfg.k_max` attempts.
pub fn run_session(
    sentence: &str,
    tx: &dyn SemanticCodec,
    rx: &dyn SemanticCodec,
    channel: &Channel,
    cfg: &HarqConfig,
    rng: &mut dyn RngCore,
) -> Result<HarqSessionResult, HarqError> {
    run_inner(
        sentence,
        tx,
        rx,
        channel,
        cfg,
        cfg.k_max,
        StopRule::Threshold(cfg.q_th),
        rng,
    )
}

/// Runs exactly `k_forced` attempts with no early stop. Used by the
/// fixed-retransmission sweeps; `ack_at` is always `None`.
pub fn run_forced(
    sentence: &str,
    tx: &dyn SemanticCodec,
    rx: &dyn SemanticCodec,
    channel: &Channel,
    cfg: &HarqConfig,
    k_forced: usize,
    rng: &mut dyn RngCore,
) -> Result<HarqSessionResult, HarqError> {
    run_inner(sentence, tx, rx, channel, cfg, k_forced, StopRule::Forced, rng)
}
