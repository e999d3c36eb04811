//! Semantic-level hybrid ARQ over a stochastic latent-space text codec.
//!
//! A sentence is encoded into a latent vector by a variational codec, sent
//! through a semantic-layer channel (AWGN and/or a systematic bias), scored by
//! a receiver-side quality estimator, and retransmitted until the score clears
//! a threshold or the attempt budget runs out. All received latents are then
//! soft-combined and decoded. Because the encoder is stochastic, every
//! retransmission carries a distinct latent for the same sentence, so the
//! combiner gains diversity instead of merely averaging noise.
//!
//! Modules:
//! - [`corpus`]: tokenization, vocabulary, dataset splitting, bundled corpus
//! - [`codec`]: the trainable linear-VAE codec, loss, training, checkpoints
//! - [`channel`]: latent-space AWGN and bias distortion
//! - [`quality`]: the six receiver-side quality estimators
//! - [`combining`]: quality-aware latent combiners plus the chase baseline
//! - [`harq`]: the closed-loop retransmission session state machine
//! - [`metrics`]: BLEU, Jaccard, and encoder-cosine text metrics
//! - [`sweep`]: experiment plans, sweep runners, CSV/JSONL emission
//! - [`chart`]: deterministic SVG line charts for sweep results
//! - [`config`]: flat key-value config files merged over defaults
//! - [`rng`]: seed-derived independent random streams

pub mod chart;
pub mod channel;
pub mod codec;
pub mod combining;
pub mod config;
pub mod corpus;
pub mod harq;
pub mod metrics;
pub mod quality;
pub mod rng;
pub mod sweep;

pub use channel::{BiasMode, Channel, ChannelConfig, ChannelError, LatentPowerEstimate};
pub use codec::{
    Checkpoint, CodecConfig, CodecError, EncoderOutput, KlConvention, LatentVector, LinearVae,
    LossBreakdown, SemanticCodec, TrainingConfig,
};
pub use combining::{
    CombineError, CombinedLatent, CombinerMethod, CombinerSpec, IterativeUpdate, ReceivedAttempt,
};
pub use config::{AppConfig, ConfigError};
pub use corpus::{CorpusError, CorpusSplit, TokenizedSentence, Vocabulary};
pub use harq::{HarqConfig, HarqError, HarqSessionResult};
pub use quality::{MetricTag, QualityConfig, QualityError, QualityScore};
pub use sweep::{
    CodecPair, ExperimentPlan, Scenario, SweepError, SweepKind, SweepOutput, SweepResult,
};
