//! Semantic-layer distortion between transmitter and receiver: AWGN at a
//! specified semantic SNR, plus optional systematic bias.
//!
//! Semantic SNR is defined as `10·log10(P_z / σ_n²)` dB, where
//! `P_z = E[‖z‖² / D]` is the average per-dimension latent power. `P_z` is
//! estimated once per codec/corpus pair over sampled latents and passed in,
//! which keeps SNR semantics stable across a sweep instead of drifting per
//! sentence.
//!
//! Bias comes in two flavors: a synthetic fixed-direction shift (drawn once
//! from the channel seed, constant across every attempt of a session), and
//! misaligned-codec mode, where the shift is realized by decoding with a
//! different checkpoint in the session harness, so the channel itself applies
//! no vector here.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, LatentVector, SemanticCodec};
use crate::rng::derive_stream;

/// Errors from channel operations.
#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("latent power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("bias scale must be non-negative, got {0}")]
    NegativeScale(f64),
    #[error("cannot estimate latent power over an empty sentence list")]
    EmptySentences,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// How the systematic latent shift is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BiasMode {
    #[default]
    None,
    /// Encode with one checkpoint, decode with another. The channel applies
    /// no shift; the harness swaps the decode codec and records it.
    MisalignedCodec,
    /// Fixed unit-direction vector scaled so that `‖b‖² = scale · D · P_z`.
    Synthetic { scale: f64 },
}

/// Channel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Semantic SNR in dB; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub bias_mode: BiasMode,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            snr_db: f64::INFINITY,
            bias_mode: BiasMode::None,
            seed: 0,
        }
    }
}

/// Monte-Carlo estimate of the average per-dimension latent power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPowerEstimate {
    pub p_z: f64,
    pub sample_size: usize,
}

/// Default number of sampled latents for [`measure_latent_power`].
pub const LATENT_POWER_SAMPLES: usize = 1000;

/// Estimates `P_z = E[‖z‖²/D]` by sampling latents of `sentences`
/// (round-robin) through the codec's posterior.
pub fn measure_latent_power(
    codec: &dyn SemanticCodec,
    sentences: &[String],
    n_samples: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<LatentPowerEstimate, ChannelError> {
    if sentences.is_empty() {
        return Err(ChannelError::EmptySentences);
    }
    let n_samples = n_samples.max(1);
    let d = codec.latent_dim() as f64;
    let mut acc = 0.0;
    for i in 0..n_samples {
        let enc = codec.encode_text(&sentences[i % sentences.len()]);
        let z = enc.sample_latent(rng);
        acc += z.norm_sq() / d;
    }
    Ok(LatentPowerEstimate {
        p_z: acc / n_samples as f64,
        sample_size: n_samples,
    })
}

/// AWGN variance for a target semantic SNR: `σ_n² = p_z · 10^(−snr_db/10)`.
///
/// An infinite `snr_db` yields zero variance. Panics are avoided for the
/// training hot path; validation lives in [`checked_noise_variance`].
pub fn noise_variance(snr_db: f64, p_z: f64) -> f64 {
    p_z * 10f64.powf(-snr_db / 10.0)
}

/// [`noise_variance`] with the `p_z > 0` precondition enforced.
pub fn checked_noise_variance(snr_db: f64, p_z: f64) -> Result<f64, ChannelError> {
    if !(p_z > 0.0) {
        return Err(ChannelError::NonPositivePower(p_z));
    }
    Ok(noise_variance(snr_db, p_z))
}

/// Adds i.i.d. Gaussian noise of the given variance to each component.
pub fn apply_awgn(
    z: &LatentVector,
    variance: f64,
    rng: &mut dyn rand::RngCore,
) -> Result<LatentVector, ChannelError> {
    if !(variance >= 0.0) {
        return Err(ChannelError::NegativeVariance(variance));
    }
    if variance == 0.0 {
        return Ok(z.clone());
    }
    let std = variance.sqrt();
    let values = z
        .values
        .iter()
        .map(|&v| {
            let eps: f64 = StandardNormal.sample(rng);
            v + std * eps
        })
        .collect();
    Ok(LatentVector::new(values))
}

/// The deterministic unit-direction bias vector for a channel seed.
fn bias_direction(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = derive_stream(seed, "channel-bias", 0, 0);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Applies the configured systematic shift to a latent.
///
/// Synthetic mode adds the fixed vector `b` with `‖b‖² = scale·D·p_z`; the
/// direction depends only on the channel seed, so the shift persists across
/// retransmissions. Misaligned-codec mode (and `none`) are identity here.
pub fn apply_bias(
    z: &LatentVector,
    cfg: &ChannelConfig,
    p_z: f64,
) -> Result<LatentVector, ChannelError> {
    match cfg.bias_mode {
        BiasMode::None | BiasMode::MisalignedCodec => Ok(z.clone()),
        BiasMode::Synthetic { scale } => {
            if scale < 0.0 {
                return Err(ChannelError::NegativeScale(scale));
            }
            if !(p_z > 0.0) {
                return Err(ChannelError::NonPositivePower(p_z));
            }
            let d = z.dim();
            let magnitude = (scale * d as f64 * p_z).sqrt();
            let dir = bias_direction(cfg.seed, d);
            let values = z
                .values
                .iter()
                .zip(&dir)
                .map(|(&v, &u)| v + magnitude * u)
                .collect();
            Ok(LatentVector::new(values))
        }
    }
}

/// A configured channel with its noise variance precomputed.
#[derive(Debug, Clone)]
pub struct Channel {
    config: ChannelConfig,
    p_z: f64,
    noise_var: f64,
}

impl Channel {
    pub fn new(config: ChannelConfig, p_z: f64) -> Result<Self, ChannelError> {
        if !(p_z > 0.0) {
            return Err(ChannelError::NonPositivePower(p_z));
        }
        if let BiasMode::Synthetic { scale } = config.bias_mode {
            if scale < 0.0 {
                return Err(ChannelError::NegativeScale(scale));
            }
        }
        let noise_var = noise_variance(config.snr_db, p_z);
        Ok(Channel {
            config,
            p_z,
            noise_var,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn p_z(&self) -> f64 {
        self.p_z
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// One pass through the channel: systematic bias, then AWGN.
    pub fn transmit(
        &self,
        z: &LatentVector,
        rng: &mut dyn rand::RngCore,
    ) -> Result<LatentVector, ChannelError> {
        let shifted = apply_bias(z, &self.config, self.p_z)?;
        apply_awgn(&shifted, self.noise_var, rng)
    }
}
