//! Latent-space soft combiners.
//!
//! After K transmission attempts the receiver holds latents `z̃₁..z̃_K` with
//! quality scores `q₁..q_K` and fuses them into a single latent before the
//! final decode. All combiners produce a point in the component-wise convex
//! hull of the inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::LatentVector;
use crate::quality::QualityScore;

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("cannot combine an empty attempt list")]
    EmptyAttempts,
    #[error("attempt latent has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Combining strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerMethod {
    WeightedAvg,
    BestOnly,
    Mrc,
    Iterative,
    Chase,
}

impl CombinerMethod {
    pub const ALL: [CombinerMethod; 5] = [
        CombinerMethod::WeightedAvg,
        CombinerMethod::BestOnly,
        CombinerMethod::Mrc,
        CombinerMethod::Iterative,
        CombinerMethod::Chase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CombinerMethod::WeightedAvg => "weighted_avg",
            CombinerMethod::BestOnly => "best_only",
            CombinerMethod::Mrc => "mrc",
            CombinerMethod::Iterative => "iterative",
            CombinerMethod::Chase => "chase",
        }
    }
}

impl std::str::FromStr for CombinerMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "weighted_avg" | "weighted_average" => Ok(CombinerMethod::WeightedAvg),
            "best_only" | "best" => Ok(CombinerMethod::BestOnly),
            "mrc" => Ok(CombinerMethod::Mrc),
            "iterative" => Ok(CombinerMethod::Iterative),
            "chase" => Ok(CombinerMethod::Chase),
            other => Err(format!(
                "unknown combiner {other:?} (expected weighted_avg, best_only, mrc, iterative, or chase)"
            )),
        }
    }
}

impl std::fmt::Display for CombinerMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Quality accumulation rule for the iterative combiner's running score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterativeUpdate {
    /// `q ← q + q_k` — the recursion then reproduces the quality-weighted
    /// linear average of all attempts.
    #[default]
    Accumulate,
    /// `q ← max(q, q_k)` — later low-quality attempts get down-weighted
    /// harder.
    Max,
}

impl std::str::FromStr for IterativeUpdate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accumulate" => Ok(IterativeUpdate::Accumulate),
            "max" => Ok(IterativeUpdate::Max),
            other => Err(format!(
                "unknown iterative update {other:?} (expected accumulate or max)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerSpec {
    pub method: CombinerMethod,
    /// Only consulted by [`CombinerMethod::Iterative`].
    pub iterative_update: IterativeUpdate,
}

impl CombinerSpec {
    pub fn new(method: CombinerMethod) -> Self {
        CombinerSpec {
            method,
            iterative_update: IterativeUpdate::default(),
        }
    }
}

impl Default for CombinerSpec {
    fn default() -> Self {
        CombinerSpec::new(CombinerMethod::WeightedAvg)
    }
}

/// One received transmission attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceivedAttempt {
    pub latent: LatentVector,
    pub quality: QualityScore,
    /// 1-based attempt index; ties in quality break toward the smallest `k`.
    pub k: usize,
}

/// Combiner output: the fused latent plus the effective per-attempt weights
/// (in input order) and a flag marking degenerate fallbacks such as MRC with
/// all-zero quality.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLatent {
    pub latent: LatentVector,
    pub weights: Vec<f64>,
    pub used_fallback: bool,
}

fn check(attempts: &[ReceivedAttempt]) -> Result<usize, CombineError> {
    let first = attempts.first().ok_or(CombineError::EmptyAttempts)?;
    let dim = first.latent.dim();
    for a in attempts {
        if a.latent.dim() != dim {
            return Err(CombineError::DimensionMismatch {
                expected: dim,
                got: a.latent.dim(),
            });
        }
    }
    Ok(dim)
}

fn weighted_sum(attempts: &[ReceivedAttempt], weights: &[f64], dim: usize) -> LatentVector {
    let mut out = vec![0.0; dim];
    for (a, &w) in attempts.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(&a.latent.values) {
            *o += w * v;
        }
    }
    LatentVector::new(out)
}

/// Softmax-of-quality weighted average: `w_k ∝ e^{q_k}`.
pub fn combine_weighted_avg(attempts: &[ReceivedAttempt]) -> Result<CombinedLatent, CombineError> {
    let dim = check(attempts)?;
    let mut weights: Vec<f64> = attempts.iter().map(|a| a.quality.value.exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let latent = weighted_sum(attempts, &weights, dim);
    Ok(CombinedLatent {
        latent,
        weights,
        used_fallback: false,
    })
}

/// Keeps the single highest-quality attempt (ties break toward smallest `k`).
/// The output latent is bit-identical to that input.
pub fn combine_best_only(attempts: &[ReceivedAttempt]) -> Result<CombinedLatent, CombineError> {
    check(attempts)?;
    let mut best = 0;
    for (i, a) in attempts.iter().enumerate().skip(1) {
        let b = &attempts[best];
        if a.quality.value > b.quality.value
            || (a.quality.value == b.quality.value && a.k < b.k)
        {
            best = i;
        }
    }
    let mut weights = vec![0.0; attempts.len()];
    weights[best] = 1.0;
    Ok(CombinedLatent {
        latent: attempts[best].latent.clone(),
        weights,
        used_fallback: false,
    })
}

/// Maximum-ratio combining: weights proportional to `q_k²`. If every quality
/// is zero the combiner falls back to an unweighted mean and sets the flag.
pub fn combine_mrc(attempts: &[ReceivedAttempt]) -> Result<CombinedLatent, CombineError> {
    let dim = check(attempts)?;
    let raw: Vec<f64> = attempts
        .iter()
        .map(|a| a.quality.value * a.quality.value)
        .collect();
    let total: f64 = raw.iter().sum();
    let (weights, used_fallback) = if total == 0.0 {
        (vec![1.0 / attempts.len() as f64; attempts.len()], true)
    } else {
        (raw.iter().map(|w| w / total).collect(), false)
    };
    let latent = weighted_sum(attempts, &weights, dim);
    Ok(CombinedLatent {
        latent,
        weights,
        used_fallback,
    })
}

/// Iterative refinement. Attempts are folded in descending quality order
/// (ties toward smaller `k`), starting from the best one:
///
/// `ẑ ← α ẑ + (1 − α) z̃_k` with `α = q⁽ᵗ⁾ / (q⁽ᵗ⁾ + q_k)`,
///
/// where the running score `q⁽ᵗ⁾` starts at the best quality and advances by
/// the configured [`IterativeUpdate`] rule. A zero denominator yields
/// `α = 0.5` and sets the fallback flag.
pub fn combine_iterative(
    attempts: &[ReceivedAttempt],
    update: IterativeUpdate,
) -> Result<CombinedLatent, CombineError> {
    let dim = check(attempts)?;
    let mut order: Vec<usize> = (0..attempts.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&attempts[i], &attempts[j]);
        b.quality
            .value
            .partial_cmp(&a.quality.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.k.cmp(&b.k))
    });

    let mut latent = attempts[order[0]].latent.values.clone();
    // Effective weights tracked through the same recursion so the reported
    // weights reproduce the latent exactly under a plain weighted sum.
    let mut weights = vec![0.0; attempts.len()];
    weights[order[0]] = 1.0;
    let mut running = attempts[order[0]].quality.value;
    let mut used_fallback = false;

    for &idx in &order[1..] {
        let qk = attempts[idx].quality.value;
        let denom = running + qk;
        let alpha = if denom == 0.0 {
            used_fallback = true;
            0.5
        } else {
            running / denom
        };
        for (o, &v) in latent.iter_mut().zip(&attempts[idx].latent.values) {
            *o = alpha * *o + (1.0 - alpha) * v;
        }
        for w in &mut weights {
            *w *= alpha;
        }
        weights[idx] += 1.0 - alpha;
        running = match update {
            IterativeUpdate::Accumulate => running + qk,
            IterativeUpdate::Max => running.max(qk),
        };
    }
    debug_assert_eq!(latent.len(), dim);
    Ok(CombinedLatent {
        latent: LatentVector::new(latent),
        weights,
        used_fallback,
    })
}

/// Chase combining: plain unweighted mean. Matched to a transmitter that
/// repeats the same sampled latent, so averaging cancels channel noise.
pub fn combine_chase(attempts: &[ReceivedAttempt]) -> Result<CombinedLatent, CombineError> {
    let dim = check(attempts)?;
    let n = attempts.len() as f64;
    let mut out = vec![0.0; dim];
    for a in attempts {
        for (o, &v) in out.iter_mut().zip(&a.latent.values) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n;
    }
    Ok(CombinedLatent {
        latent: LatentVector::new(out),
        weights: vec![1.0 / n; attempts.len()],
        used_fallback: false,
    })
}

/// Runs the combiner selected by `spec`.
pub fn combine(
    attempts: &[ReceivedAttempt],
    spec: &CombinerSpec,
) -> Result<CombinedLatent, CombineError> {
    match spec.method {
        CombinerMethod::WeightedAvg => combine_weighted_avg(attempts),
        CombinerMethod::BestOnly => combine_best_only(attempts),
        CombinerMethod::Mrc => combine_mrc(attempts),
        CombinerMethod::Iterative => combine_iterative(attempts, spec.iterative_update),
        CombinerMethod::Chase => combine_chase(attempts),
    }
}
