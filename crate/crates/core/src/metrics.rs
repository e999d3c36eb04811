//! Text-level evaluation metrics: BLEU-n with brevity penalty, Jaccard index
//! over token sets, and cosine similarity of encoder means.

use std::collections::HashMap;

use crate::codec::SemanticCodec;

/// A BLEU score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScore {
    pub value: f64,
    pub order: usize,
    pub brevity_penalty_applied: bool,
}

/// Which similarity measure a [`SimilarityScore`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// Cosine of encoder means, in `[-1, 1]`.
    Cosine,
    /// Jaccard index of token sets, in `[0, 1]`.
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub value: f64,
    pub kind: SimilarityKind,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for win in tokens.windows(n) {
            *counts.entry(win).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-n: geometric mean of clipped i-gram precisions for `i = 1..=n`,
/// multiplied by the brevity penalty `exp(1 - |ref|/|cand|)` when the
/// candidate is shorter than the reference.
///
/// With smoothing on, any i-gram order with zero matches is add-one smoothed;
/// without it, a zero count collapses the score to 0. An empty candidate
/// scores 0.
pub fn bleu(candidate: &[String], reference: &[String], n: usize, smoothing: bool) -> BleuScore {
    bleu_with_options(candidate, reference, n, smoothing, true)
}

/// [`bleu`] with the brevity penalty switchable off.
pub fn bleu_with_options(
    candidate: &[String],
    reference: &[String],
    n: usize,
    smoothing: bool,
    brevity_penalty: bool,
) -> BleuScore {
    assert!(n >= 1, "BLEU order must be at least 1");
    if candidate.is_empty() {
        return BleuScore {
            value: 0.0,
            order: n,
            brevity_penalty_applied: false,
        };
    }

    let mut log_sum = 0.0;
    for i in 1..=n {
        let cand_counts = ngram_counts(candidate, i);
        let ref_counts = ngram_counts(reference, i);
        let total: usize = cand_counts.values().sum();
        let matches: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matches > 0 {
            matches as f64 / total as f64
        } else if smoothing {
            (matches + 1) as f64 / (total + 1) as f64
        } else {
            return BleuScore {
                value: 0.0,
                order: n,
                brevity_penalty_applied: false,
            };
        };
        log_sum += precision.ln();
    }
    let mut value = (log_sum / n as f64).exp();

    let bp_active = brevity_penalty && candidate.len() < reference.len();
    if bp_active {
        value *= (1.0 - reference.len() as f64 / candidate.len() as f64).exp();
    }
    BleuScore {
        value,
        order: n,
        brevity_penalty_applied: bp_active,
    }
}

/// Jaccard index of the token sets of `a` and `b`; two empty sets agree
/// vacuously and score 1.
pub fn jaccard(a: &[String], b: &[String]) -> SimilarityScore {
    use std::collections::HashSet;
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    let value = if sa.is_empty() && sb.is_empty() {
        1.0
    } else {
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        inter / union
    };
    SimilarityScore {
        value,
        kind: SimilarityKind::Jaccard,
    }
}

/// Cosine of two vectors; 0 when either has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

/// Cosine similarity of two sentences under a codec: the cosine of the
/// encoder means of `s1` and `s2`.
pub fn cosine_similarity(s1: &str, s2: &str, codec: &dyn SemanticCodec) -> SimilarityScore {
    let m1 = codec.encode_text(s1).mu;
    let m2 = codec.encode_text(s2).mu;
    SimilarityScore {
        value: cosine(&m1, &m2),
        kind: SimilarityKind::Cosine,
    }
}
