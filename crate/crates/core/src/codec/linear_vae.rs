//! A linear VAE over bag-of-token counts, small enough to train on a desk
//! machine in seconds and simple enough to differentiate by hand.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CodecConfig, CodecError, EncoderOutput, LatentVector, SemanticCodec, LOG_VAR_CLAMP};
use crate::corpus::{TokenizedSentence, Vocabulary};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[r] = acc;
        }
        y
    }

    /// `y = A^T x`.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (yc, a) in y.iter_mut().zip(row) {
                *yc += a * xr;
            }
        }
        y
    }

    /// `A += scale * u v^T`.
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let ur = scale * u[r];
            if ur == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, b) in row.iter_mut().zip(v) {
                *a += ur * b;
            }
        }
    }
}

/// All trainable parameters of the [`LinearVae`].
///
/// The flat-index accessors expose every scalar parameter in a fixed order so
/// gradients can be checked against finite differences and the optimizer can
/// stay generic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub w_mu: Mat,
    pub b_mu: Vec<f64>,
    pub w_log_var: Mat,
    pub b_log_var: Vec<f64>,
    pub w_out: Vec<Mat>,
    pub b_out: Vec<Vec<f64>>,
}

impl VaeParams {
    pub fn zeros(latent_dim: usize, vocab_size: usize, max_decode_len: usize) -> Self {
        VaeParams {
            w_mu: Mat::zeros(latent_dim, vocab_size),
            b_mu: vec![0.0; latent_dim],
            w_log_var: Mat::zeros(latent_dim, vocab_size),
            b_log_var: vec![0.0; latent_dim],
            w_out: (0..max_decode_len)
                .map(|_| Mat::zeros(vocab_size, latent_dim))
                .collect(),
            b_out: (0..max_decode_len).map(|_| vec![0.0; vocab_size]).collect(),
        }
    }

    /// Total number of scalar parameters.
    pub fn flat_len(&self) -> usize {
        self.segments().map(|s| s.len()).sum()
    }

    fn segments(&self) -> impl Iterator<Item = &[f64]> {
        let head = [
            self.w_mu.data.as_slice(),
            self.b_mu.as_slice(),
            self.w_log_var.data.as_slice(),
            self.b_log_var.as_slice(),
        ];
        head.into_iter()
            .chain(self.w_out.iter().map(|m| m.data.as_slice()))
            .chain(self.b_out.iter().map(|b| b.as_slice()))
    }

    fn segments_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let head = [
            self.w_mu.data.as_mut_slice(),
            self.b_mu.as_mut_slice(),
            self.w_log_var.data.as_mut_slice(),
            self.b_log_var.as_mut_slice(),
        ];
        head.into_iter()
            .chain(self.w_out.iter_mut().map(|m| m.data.as_mut_slice()))
            .chain(self.b_out.iter_mut().map(|b| b.as_mut_slice()))
    }

    /// Scalar parameter at flat index `i`.
    pub fn get_flat(&self, i: usize) -> f64 {
        let mut off = i;
        for seg in self.segments() {
            if off < seg.len() {
                return seg[off];
            }
            off -= seg.len();
        }
        panic!("flat index {i} out of range");
    }

    /// Adds `delta` to the scalar parameter at flat index `i`.
    pub fn add_flat(&mut self, i: usize, delta: f64) {
        let mut off = i;
        for seg in self.segments_mut() {
            if off < seg.len() {
                seg[off] += delta;
                return;
            }
            off -= seg.len();
        }
        panic!("flat index {i} out of range");
    }

    /// Global Euclidean norm over all parameters.
    pub fn global_norm(&self) -> f64 {
        self.segments()
            .map(|s| s.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `self += scale * other`, elementwise. Shapes must match.
    pub fn axpy(&mut self, scale: f64, other: &VaeParams) {
        for (dst, src) in self.segments_mut().zip(other.segments()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// `self *= scale`, elementwise.
    pub fn scale(&mut self, scale: f64) {
        for seg in self.segments_mut() {
            for v in seg {
                *v *= scale;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.segments().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Linear VAE codec: bag-of-counts encoder, affine posterior heads, and one
/// affine output head per decode position.
#[derive(Debug, Clone)]
pub struct LinearVae {
    config: CodecConfig,
    vocab: Vocabulary,
    params: VaeParams,
}

impl LinearVae {
    /// All-zero parameters: the posterior is `N(b_mu, exp(b_log_var))` for
    /// every input.
    pub fn new_zeros(config: CodecConfig, vocab: Vocabulary) -> Self {
        let params = VaeParams::zeros(config.latent_dim, vocab.size(), config.max_decode_len);
        LinearVae {
            config,
            vocab,
            params,
        }
    }

    /// Gaussian-initialized weights (`N(0, std²)`), zero biases.
    pub fn init_random<R: Rng + ?Sized>(
        config: CodecConfig,
        vocab: Vocabulary,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut vae = Self::new_zeros(config, vocab);
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        for seg in vae.params.segments_mut() {
            for v in seg {
                *v = normal.sample(rng);
            }
        }
        // biases start at zero
        for b in vae
            .params
            .b_mu
            .iter_mut()
            .chain(vae.params.b_log_var.iter_mut())
            .chain(vae.params.b_out.iter_mut().flatten())
        {
            *b = 0.0;
        }
        vae
    }

    pub fn from_parts(config: CodecConfig, vocab: Vocabulary, params: VaeParams) -> Self {
        LinearVae {
            config,
            vocab,
            params,
        }
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn params(&self) -> &VaeParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut VaeParams {
        &mut self.params
    }

    /// Bag-of-counts input vector: one slot per vocabulary entry, padding
    /// excluded.
    pub fn bag_counts(&self, s: &TokenizedSentence) -> Result<Vec<f64>, CodecError> {
        let v = self.vocab.size();
        let pad = self.vocab.special().pad;
        let mut x = vec![0.0; v];
        for &id in &s.ids {
            if id >= v {
                return Err(CodecError::TokenOutOfRange {
                    index: id,
                    vocab_size: v,
                });
            }
            if id != pad {
                x[id] += 1.0;
            }
        }
        Ok(x)
    }

    /// Raw (pre-clamp) posterior heads for the given count vector.
    pub(crate) fn posterior_raw(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut mu = self.params.w_mu.matvec(x);
        for (m, b) in mu.iter_mut().zip(&self.params.b_mu) {
            *m += b;
        }
        let mut lv = self.params.w_log_var.matvec(x);
        for (l, b) in lv.iter_mut().zip(&self.params.b_log_var) {
            *l += b;
        }
        (mu, lv)
    }

    /// Output-head logits for decode position `t` (0-based).
    pub fn logits_at(&self, t: usize, z: &[f64]) -> Vec<f64> {
        let mut logits = self.params.w_out[t].matvec(z);
        for (l, b) in logits.iter_mut().zip(&self.params.b_out[t]) {
            *l += b;
        }
        logits
    }

    fn check_latent(&self, z: &LatentVector) -> Result<(), CodecError> {
        if z.dim() != self.config.latent_dim {
            return Err(CodecError::DimensionMismatch {
                expected: self.config.latent_dim,
                got: z.dim(),
            });
        }
        if !z.is_finite() {
            return Err(CodecError::NonFiniteLatent);
        }
        Ok(())
    }

    /// Runs the decode loop with an arbitrary token picker. The picker never
    /// sees `<s>` or `<pad>` as candidates (their logits are masked out).
    fn decode_loop(
        &self,
        z: &LatentVector,
        mut pick: impl FnMut(&[f64]) -> usize,
    ) -> Result<TokenizedSentence, CodecError> {
        self.check_latent(z)?;
        let sp = self.vocab.special();
        let mut ids = vec![sp.sos];
        for t in 0..self.config.max_decode_len {
            let mut logits = self.logits_at(t, &z.values);
            logits[sp.sos] = f64::NEG_INFINITY;
            logits[sp.pad] = f64::NEG_INFINITY;
            let tok = pick(&logits);
            ids.push(tok);
            if tok == sp.eos {
                break;
            }
        }
        if *ids.last().unwrap() != sp.eos {
            ids.push(sp.eos);
        }
        Ok(TokenizedSentence { ids })
    }
}

/// Index of the strictly greatest finite logit; ties break to the smallest
/// index.
fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if l > best_val {
            best = i;
            best_val = l;
        }
    }
    best
}

impl SemanticCodec for LinearVae {
    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn max_len(&self) -> usize {
        self.config.max_len()
    }

    fn encode(&self, s: &TokenizedSentence) -> Result<EncoderOutput, CodecError> {
        let x = self.bag_counts(s)?;
        let (mu, lv_raw) = self.posterior_raw(&x);
        let log_var = lv_raw
            .into_iter()
            .map(|l| l.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP))
            .collect();
        Ok(EncoderOutput { mu, log_var })
    }

    fn decode(&self, z: &LatentVector) -> Result<TokenizedSentence, CodecError> {
        self.decode_loop(z, argmax)
    }

    fn decode_sampled(
        &self,
        z: &LatentVector,
        temperature: f64,
        rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(CodecError::InvalidTemperature(temperature));
        }
        self.decode_loop(z, |logits| {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits
                .iter()
                .map(|&l| {
                    if l.is_finite() {
                        ((l - max) / temperature).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 && *w > 0.0 {
                    return i;
                }
            }
            // numeric fallthrough: last token with positive weight
            weights
                .iter()
                .rposition(|w| *w > 0.0)
                .expect("softmax has at least one positive weight")
        })
    }
}
