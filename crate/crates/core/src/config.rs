//! Flat key-value configuration files.
//!
//! The accepted format is TOML restricted to scalar (or float-array) leaves
//! addressed by dotted keys; `channel.snr_db = 3.0` and a `[channel]` table
//! with `snr_db = 3.0` are equivalent. Every key is optional — parsed values
//! override the built-in defaults and unset keys leave them alone. Unknown
//! keys are rejected so typos fail loudly instead of silently running the
//! default.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::{BiasMode, ChannelConfig};
use crate::codec::{KlConvention, TrainingConfig};
use crate::combining::{CombinerMethod, CombinerSpec, IterativeUpdate};
use crate::harq::HarqConfig;
use crate::quality::{MetricTag, QualityConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
}

/// All recognized keys, parsed but not yet merged into runtime configs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppConfig {
    pub channel_snr_db: Option<f64>,
    pub channel_bias_mode: Option<BiasModeKey>,
    pub channel_bias_scale: Option<f64>,
    pub channel_seed: Option<u64>,

    pub quality_metric: Option<MetricTag>,
    pub quality_n_passes: Option<usize>,
    pub quality_temperature: Option<f64>,
    pub quality_epsilon: Option<f64>,
    pub bleu_brevity_penalty: Option<bool>,

    pub combiner_method: Option<CombinerMethod>,
    pub combiner_iterative_update: Option<IterativeUpdate>,

    pub harq_q_th: Option<f64>,
    pub harq_k_max: Option<usize>,

    pub sweep_n_sentences: Option<usize>,
    pub sweep_n_trials: Option<usize>,
    pub sweep_split_seed: Option<u64>,

    pub train_epochs: Option<usize>,
    pub train_patience: Option<usize>,
    pub train_learning_rate: Option<f64>,
    pub train_batch_size: Option<usize>,
    pub train_beta_start: Option<f64>,
    pub train_beta_end: Option<f64>,
    pub train_beta_anneal_epochs: Option<usize>,
    pub train_lambda_free: Option<f64>,
    pub train_label_smoothing: Option<f64>,
    pub train_kl_convention: Option<KlConvention>,
    pub train_snr_set_db: Option<Vec<f64>>,
    pub train_grad_clip: Option<f64>,
    pub train_word_dropout: Option<f64>,
    pub train_init_std: Option<f64>,
    pub train_vocab_size: Option<usize>,
    pub train_latent_dim: Option<usize>,
    pub train_max_decode_len: Option<usize>,
}

/// `channel.bias_mode` value; the synthetic scale arrives through the
/// separate `channel.bias_scale` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasModeKey {
    None,
    MisalignedCodec,
    Synthetic,
}

impl FromStr for BiasModeKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(BiasModeKey::None),
            "misaligned-codec" => Ok(BiasModeKey::MisalignedCodec),
            "synthetic" => Ok(BiasModeKey::Synthetic),
            other => Err(format!(
                "unknown bias mode {other:?} (expected none, misaligned-codec, or synthetic)"
            )),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text)?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = AppConfig::default();
        for (key, value) in flat {
            cfg.assign(&key, value)?;
        }
        Ok(cfg)
    }

    fn assign(&mut self, key: &str, value: toml::Value) -> Result<(), ConfigError> {
        match key {
            "channel.snr_db" => self.channel_snr_db = Some(float_or_inf(key, &value)?),
            "channel.bias_mode" => {
                self.channel_bias_mode = Some(parse_enum(key, &value)?);
            }
            "channel.bias_scale" => self.channel_bias_scale = Some(float(key, &value)?),
            "channel.seed" => self.channel_seed = Some(unsigned(key, &value)?),

            "quality.metric" => self.quality_metric = Some(parse_enum(key, &value)?),
            "quality.n_passes" => self.quality_n_passes = Some(unsigned(key, &value)? as usize),
            "quality.temperature" => self.quality_temperature = Some(float(key, &value)?),
            "quality.epsilon" => self.quality_epsilon = Some(float(key, &value)?),
            "bleu.brevity_penalty" => self.bleu_brevity_penalty = Some(boolean(key, &value)?),

            "combiner.method" => self.combiner_method = Some(parse_enum(key, &value)?),
            "combiner.iterative_update" => {
                self.combiner_iterative_update = Some(parse_enum(key, &value)?);
            }

            "harq.q_th" => self.harq_q_th = Some(float(key, &value)?),
            "harq.k_max" => self.harq_k_max = Some(unsigned(key, &value)? as usize),

            "sweep.n_sentences" => self.sweep_n_sentences = Some(unsigned(key, &value)? as usize),
            "sweep.n_trials" => self.sweep_n_trials = Some(unsigned(key, &value)? as usize),
            "sweep.split_seed" => self.sweep_split_seed = Some(unsigned(key, &value)?),

            "train.epochs" => self.train_epochs = Some(unsigned(key, &value)? as usize),
            "train.patience" => self.train_patience = Some(unsigned(key, &value)? as usize),
            "train.learning_rate" => self.train_learning_rate = Some(float(key, &value)?),
            "train.batch_size" => self.train_batch_size = Some(unsigned(key, &value)? as usize),
            "train.beta_start" => self.train_beta_start = Some(float(key, &value)?),
            "train.beta_end" => self.train_beta_end = Some(float(key, &value)?),
            "train.beta_anneal_epochs" => {
                self.train_beta_anneal_epochs = Some(unsigned(key, &value)? as usize);
            }
            "train.lambda_free" => self.train_lambda_free = Some(float(key, &value)?),
            "train.label_smoothing" => self.train_label_smoothing = Some(float(key, &value)?),
            "train.kl_convention" => {
                let s = string(key, &value)?;
                let conv = match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
                    "paper" => KlConvention::Paper,
                    "clamped-positive" => KlConvention::ClampedPositive,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            reason: format!(
                                "unknown kl convention {other:?} (expected paper or clamped-positive)"
                            ),
                        })
                    }
                };
                self.train_kl_convention = Some(conv);
            }
            "train.snr_set_db" => self.train_snr_set_db = Some(float_array(key, &value)?),
            "train.grad_clip" => self.train_grad_clip = Some(float(key, &value)?),
            "train.word_dropout" => self.train_word_dropout = Some(float(key, &value)?),
            "train.init_std" => self.train_init_std = Some(float(key, &value)?),
            "train.vocab_size" => self.train_vocab_size = Some(unsigned(key, &value)? as usize),
            "train.latent_dim" => {
                let v = unsigned(key, &value)? as usize;
                if v < 1 {
                    return Err(bad(key, "latent_dim must be >= 1"));
                }
                self.train_latent_dim = Some(v);
            }
            "train.max_decode_len" => {
                let v = unsigned(key, &value)? as usize;
                if v < 2 {
                    return Err(bad(key, "max_decode_len must be >= 2"));
                }
                self.train_max_decode_len = Some(v);
            }

            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Channel settings merged onto `base`. `channel.bias_scale` only takes
    /// effect when the bias mode resolves to `synthetic`.
    pub fn channel_config(&self, base: &ChannelConfig) -> ChannelConfig {
        let mut out = base.clone();
        if let Some(snr) = self.channel_snr_db {
            out.snr_db = snr;
        }
        if let Some(seed) = self.channel_seed {
            out.seed = seed;
        }
        let scale = self.channel_bias_scale;
        out.bias_mode = match self.channel_bias_mode {
            Some(BiasModeKey::None) => BiasMode::None,
            Some(BiasModeKey::MisalignedCodec) => BiasMode::MisalignedCodec,
            Some(BiasModeKey::Synthetic) => BiasMode::Synthetic {
                scale: scale.unwrap_or(1.0),
            },
            None => match (base.bias_mode, scale) {
                // a bare bias_scale re-scales an already-synthetic base
                (BiasMode::Synthetic { .. }, Some(s)) => BiasMode::Synthetic { scale: s },
                (mode, _) => mode,
            },
        };
        out
    }

    pub fn quality_config(&self, base: &QualityConfig) -> QualityConfig {
        let mut out = base.clone();
        if let Some(m) = self.quality_metric {
            out.metric = m;
        }
        if let Some(n) = self.quality_n_passes {
            out.n_passes = n;
        }
        if let Some(t) = self.quality_temperature {
            out.temperature = t;
        }
        if let Some(e) = self.quality_epsilon {
            out.epsilon = e;
        }
        if let Some(b) = self.bleu_brevity_penalty {
            out.bleu_brevity_penalty = b;
        }
        out
    }

    pub fn combiner_spec(&self, base: &CombinerSpec) -> CombinerSpec {
        let mut out = *base;
        if let Some(m) = self.combiner_method {
            out.method = m;
        }
        if let Some(u) = self.combiner_iterative_update {
            out.iterative_update = u;
        }
        out
    }

    pub fn harq_config(&self, base: &HarqConfig) -> HarqConfig {
        let mut out = base.clone();
        if let Some(q) = self.harq_q_th {
            out.q_th = q;
        }
        if let Some(k) = self.harq_k_max {
            out.k_max = k;
        }
        out.quality = self.quality_config(&base.quality);
        out.combiner = self.combiner_spec(&base.combiner);
        out
    }

    pub fn training_config(&self, base: &TrainingConfig) -> TrainingConfig {
        let mut out = base.clone();
        if let Some(v) = self.train_epochs {
            out.epochs = v;
        }
        if let Some(v) = self.train_patience {
            out.patience = v;
        }
        if let Some(v) = self.train_learning_rate {
            out.learning_rate = v;
        }
        if let Some(v) = self.train_batch_size {
            out.batch_size = v;
        }
        if let Some(v) = self.train_beta_start {
            out.beta_start = v;
        }
        if let Some(v) = self.train_beta_end {
            out.beta_end = v;
        }
        if let Some(v) = self.train_beta_anneal_epochs {
            out.beta_anneal_epochs = v;
        }
        if let Some(v) = self.train_lambda_free {
            out.lambda_free = v;
        }
        if let Some(v) = self.train_label_smoothing {
            out.label_smoothing = v;
        }
        if let Some(v) = self.train_kl_convention {
            out.kl_convention = v;
        }
        if let Some(v) = &self.train_snr_set_db {
            out.snr_set_db = v.clone();
        }
        if let Some(v) = self.train_grad_clip {
            out.grad_clip = v;
        }
        if let Some(v) = self.train_word_dropout {
            out.word_dropout = v;
        }
        if let Some(v) = self.train_init_std {
            out.init_std = v;
        }
        if let Some(v) = self.train_vocab_size {
            out.vocab_size = v;
        }
        let dim = self.train_latent_dim.unwrap_or(out.codec.latent_dim);
        let t_max = self.train_max_decode_len.unwrap_or(out.codec.max_decode_len);
        if dim != out.codec.latent_dim || t_max != out.codec.max_decode_len {
            let mode = out.codec.decode_mode;
            out.codec = crate::codec::CodecConfig::new(dim, t_max);
            out.codec.decode_mode = mode;
        }
        out
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        reason: reason.into(),
    }
}

fn float(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(key, format!("expected a number, got {other}"))),
    }
}

/// Like [`float`] but additionally accepts the strings `"inf"`/`"infinity"`
/// (TOML floats already cover `inf`, this is belt-and-braces for quoted
/// values).
fn float_or_inf(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    if let toml::Value::String(s) = v {
        let t = s.trim().to_ascii_lowercase();
        return match t.as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            _ => Err(bad(key, format!("expected a number or \"inf\", got {s:?}"))),
        };
    }
    float(key, v)
}

fn unsigned(key: &str, v: &toml::Value) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::Integer(i) => Err(bad(key, format!("must be non-negative, got {i}"))),
        other => Err(bad(key, format!("expected an integer, got {other}"))),
    }
}

fn boolean(key: &str, v: &toml::Value) -> Result<bool, ConfigError> {
    match v {
        toml::Value::Boolean(b) => Ok(*b),
        other => Err(bad(key, format!("expected true or false, got {other}"))),
    }
}

fn string(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        other => Err(bad(key, format!("expected a string, got {other}"))),
    }
}

fn float_array(key: &str, v: &toml::Value) -> Result<Vec<f64>, ConfigError> {
    match v {
        toml::Value::Array(items) => items.iter().map(|i| float(key, i)).collect(),
        other => Err(bad(key, format!("expected an array of numbers, got {other}"))),
    }
}

fn parse_enum<T: FromStr<Err = String>>(key: &str, v: &toml::Value) -> Result<T, ConfigError> {
    let s = string(key, v)?;
    s.parse().map_err(|reason| ConfigError::BadValue {
        key: key.into(),
        reason,
    })
}
