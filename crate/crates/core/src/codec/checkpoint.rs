//! Versioned JSON checkpoints for the linear VAE.
//!
//! A checkpoint embeds the codec configuration, the full vocabulary, and all
//! parameters, so a file is sufficient to reconstruct the codec exactly.
//! Floats survive the JSON round trip bit for bit (shortest-round-trip
//! serialization), which the tests rely on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CodecConfig, CodecError, LinearVae, Mat, SemanticCodec, VaeParams};
use crate::corpus::Vocabulary;

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized codec state plus training provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: CodecConfig,
    pub vocab_tokens: Vec<String>,
    pub params: VaeParams,
    /// Training epoch this snapshot was taken at (1-based).
    pub epoch: usize,
    /// Validation score of that epoch.
    pub val_metric: f64,
}

impl Checkpoint {
    pub fn from_vae(vae: &LinearVae, epoch: usize, val_metric: f64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: *vae.config(),
            vocab_tokens: (0..vae.vocab().size())
                .map(|i| vae.vocab().token(i).expect("index in range").to_string())
                .collect(),
            params: vae.params().clone(),
            epoch,
            val_metric,
        }
    }

    /// Validates internal consistency and reconstructs the codec.
    pub fn into_vae(self) -> Result<LinearVae, CodecError> {
        self.validate()?;
        let vocab = Vocabulary::from_token_list(self.vocab_tokens)
            .map_err(|e| CodecError::CorruptCheckpoint(e.to_string()))?;
        Ok(LinearVae::from_parts(self.config, vocab, self.params))
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CodecError::UnsupportedVersion(self.version));
        }
        let d = self.config.latent_dim;
        let t_max = self.config.max_decode_len;
        let v = self.vocab_tokens.len();
        if d == 0 || t_max < 2 {
            return Err(CodecError::CorruptCheckpoint(format!(
                "bad config: latent_dim={d}, max_decode_len={t_max}"
            )));
        }
        let check_mat = |m: &Mat, rows: usize, cols: usize, name: &str| {
            if m.rows != rows || m.cols != cols {
                return Err(CodecError::CorruptCheckpoint(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows, m.cols
                )));
            }
            if m.data.len() != rows * cols {
                return Err(CodecError::CorruptCheckpoint(format!(
                    "{name} holds {} values for a {rows}x{cols} shape",
                    m.data.len()
                )));
            }
            Ok(())
        };
        let p = &self.params;
        check_mat(&p.w_mu, d, v, "w_mu")?;
        check_mat(&p.w_log_var, d, v, "w_log_var")?;
        if p.b_mu.len() != d || p.b_log_var.len() != d {
            return Err(CodecError::CorruptCheckpoint(
                "posterior bias length does not match latent_dim".into(),
            ));
        }
        if p.w_out.len() != t_max || p.b_out.len() != t_max {
            return Err(CodecError::CorruptCheckpoint(format!(
                "{} output heads for max_decode_len {t_max}",
                p.w_out.len()
            )));
        }
        for (t, (w, b)) in p.w_out.iter().zip(&p.b_out).enumerate() {
            check_mat(w, v, d, &format!("w_out[{t}]"))?;
            if b.len() != v {
                return Err(CodecError::CorruptCheckpoint(format!(
                    "b_out[{t}] length {} does not match vocabulary size {v}",
                    b.len()
                )));
            }
        }
        if !p.is_finite() {
            return Err(CodecError::CorruptCheckpoint(
                "parameters contain non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// Writes a checkpoint as pretty-printed JSON.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CodecError> {
    std::fs::write(path, serde_json::to_string_pretty(ckpt)?)?;
    Ok(())
}

/// Reads and validates a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CodecError> {
    let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    ckpt.validate()?;
    Ok(ckpt)
}
