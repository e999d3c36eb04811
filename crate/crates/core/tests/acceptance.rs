//! Release acceptance gate: ten end-to-end checks spanning the combiners, the
//! quality estimators, the channel, the training loss, the session loop, and
//! the sweep protocols.
//!
//! This target runs without the libtest harness so that every criterion
//! reports exactly one PASS/FAIL line even when an earlier one fails. The
//! process exits nonzero if any criterion fails.
//!
//! The expensive fixture (one full default training run) is built once and
//! shared. Statistical checks pair sessions through common random numbers and
//! judge differences with percentile-bootstrap confidence intervals.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, RngCore};

use semharq::channel::{
    apply_awgn, measure_latent_power, noise_variance, BiasMode, Channel, ChannelConfig,
};
use semharq::codec::train::{batch_loss, batch_loss_grads, evaluate, EvalMetrics, TrainingBatch};
use semharq::codec::{
    self, kl_free_bits, CodecConfig, CodecError, CountingCodec, EncoderOutput, KlConvention,
    LatentVector, LinearVae, LossParams, SemanticCodec, TrainingConfig,
};
use semharq::combining::{
    combine, combine_best_only, combine_mrc, combine_weighted_avg, CombinerMethod, CombinerSpec,
    ReceivedAttempt,
};
use semharq::corpus::{
    self, bundled_corpus, split_corpus, CorpusSplit, TokenizedSentence, Vocabulary,
    DEFAULT_SPLIT_RATIOS,
};
use semharq::harq::{run_session, HarqConfig};
use semharq::quality::{
    estimate, metric_a_vae_uncertainty, metric_b_self_consistency, metric_c_decoder_entropy,
    metric_d_latent_distance, metric_e_text_bleu, metric_f_text_similarity, MetricTag,
    QualityConfig, QualityScore,
};
use semharq::rng::derive_stream;
use semharq::sweep::{
    csv_string, jsonl_string, run_sweep, CodecPair, ExperimentPlan, Scenario, SweepKind,
    SweepOutput,
};

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

type Criterion = fn() -> Result<String, String>;

const CRITERIA: [(&str, Criterion); 10] = [
    ("combiners match independent oracles", criterion_1),
    ("quality estimators hit analytic values and stay in [0, 1]", criterion_2),
    ("channel noise realizes the nominal SNR", criterion_3),
    ("analytic loss gradients match finite differences", criterion_4),
    ("default training lifts validation BLEU-4 by 0.3", criterion_5),
    ("sessions stop on ACK and load rises with the threshold", criterion_6),
    ("resampling diversity pays off under codec mismatch", criterion_7),
    ("aligned-channel BLEU never drops with more retransmissions", criterion_8),
    ("best-only collapses at low SNR and converges at high SNR", criterion_9),
    ("default sweeps are byte-reproducible and fast enough", criterion_10),
];

fn main() {
    let mut failed = 0usize;
    for (i, (title, run)) in CRITERIA.iter().enumerate() {
        let line = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(detail)) => format!("PASS criterion {} — {title}: {detail}", i + 1),
            Ok(Err(msg)) => {
                failed += 1;
                format!("FAIL criterion {} — {title}: {msg}", i + 1)
            }
            Err(payload) => {
                failed += 1;
                format!(
                    "FAIL criterion {} — {title}: panicked: {}",
                    i + 1,
                    panic_text(payload.as_ref())
                )
            }
        };
        println!("{line}");
    }
    println!(
        "acceptance: {}/{} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

// --- shared fixture -------------------------------------------------------

/// One default training run plus the matching untrained baseline; everything
/// downstream (criteria 5–10) reuses it.
struct Fixture {
    split: CorpusSplit,
    /// Best-validation checkpoint (codec A).
    vae_a: LinearVae,
    /// Final distinct checkpoint (codec B) for the misaligned scenario.
    vae_b: LinearVae,
    trained: EvalMetrics,
    untrained: EvalMetrics,
    train_secs: f64,
}

static FIXTURE: OnceLock<Result<Fixture, String>> = OnceLock::new();

fn fixture() -> Result<&'static Fixture, String> {
    FIXTURE
        .get_or_init(|| {
            let cfg = TrainingConfig::default();
            let split = split_corpus(&bundled_corpus(), DEFAULT_SPLIT_RATIOS, cfg.seed)
                .map_err(|e| format!("corpus split: {e}"))?;
            let started = Instant::now();
            let outcome = codec::train(&split, &cfg).map_err(|e| format!("training: {e}"))?;
            let train_secs = started.elapsed().as_secs_f64();
            let vae_a = outcome
                .best
                .into_vae()
                .map_err(|e| format!("best checkpoint: {e}"))?;
            let vae_b = outcome
                .last
                .into_vae()
                .map_err(|e| format!("last checkpoint: {e}"))?;

            // the baseline is the exact initialization the run started from
            let vocab = Vocabulary::build(&split.train, cfg.vocab_size)
                .map_err(|e| format!("vocabulary: {e}"))?;
            let mut init_rng = derive_stream(cfg.seed, "train-init", 0, 0);
            let raw = LinearVae::init_random(cfg.codec, vocab, cfg.init_std, &mut init_rng);

            let mut r1 = derive_stream(cfg.seed, "acceptance-eval", 0, 0);
            let mut r2 = derive_stream(cfg.seed, "acceptance-eval", 0, 0);
            let trained =
                evaluate(&vae_a, &split.validation, &mut r1).map_err(|e| e.to_string())?;
            let untrained =
                evaluate(&raw, &split.validation, &mut r2).map_err(|e| e.to_string())?;
            Ok(Fixture {
                split,
                vae_a,
                vae_b,
                trained,
                untrained,
                train_secs,
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

/// Untrained codec over the bundled corpus, for checks that need realistic
/// shapes but no training.
fn scratch_codec() -> LinearVae {
    let vocab = Vocabulary::build(&bundled_corpus(), 128).expect("bundled corpus vocabulary");
    let mut rng = derive_stream(2026, "acceptance-codec", 0, 0);
    LinearVae::init_random(CodecConfig::default(), vocab, 0.2, &mut rng)
}

// --- statistics helpers ---------------------------------------------------

/// Percentile bootstrap of the mean: `(mean, ci_lo, ci_hi)` at 95%.
fn bootstrap_mean_ci(values: &[f64], rng: &mut impl Rng) -> (f64, f64, f64) {
    const RESAMPLES: usize = 1000;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, mean, mean);
    }
    let mut means = Vec::with_capacity(RESAMPLES);
    for _ in 0..RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap means"));
    let idx = |p: f64| (((RESAMPLES - 1) as f64) * p).round() as usize;
    (mean, means[idx(0.025)], means[idx(0.975)])
}

fn cell_index(out: &SweepOutput, series: &str, x: f64) -> Result<usize, String> {
    out.result
        .rows
        .iter()
        .position(|r| r.series == series && r.x == x)
        .ok_or_else(|| format!("sweep has no cell {series} @ x = {x}"))
}

fn row_bleu_mean(out: &SweepOutput, series: &str, x: f64) -> Result<f64, String> {
    Ok(out.result.rows[cell_index(out, series, x)?].bleu_mean)
}

/// Per-session BLEU differences between two cells of the same series, paired
/// by `(sentence_id, trial)`; valid because session randomness is keyed only
/// by seed, sentence, and trial.
fn paired_bleu_diffs(
    out: &SweepOutput,
    series: &str,
    x_hi: f64,
    x_lo: f64,
) -> Result<Vec<f64>, String> {
    let hi_cell = cell_index(out, series, x_hi)?;
    let lo_cell = cell_index(out, series, x_lo)?;
    paired_diffs_by_cell(out, series, hi_cell, lo_cell)
}

/// Same pairing across two series at one x position.
fn paired_bleu_diffs_series(
    out: &SweepOutput,
    series_hi: &str,
    series_lo: &str,
    x: f64,
) -> Result<Vec<f64>, String> {
    let hi_cell = cell_index(out, series_hi, x)?;
    let lo_cell = cell_index(out, series_lo, x)?;
    paired_diffs_by_cell(out, series_hi, hi_cell, lo_cell)
}

fn paired_diffs_by_cell(
    out: &SweepOutput,
    label: &str,
    hi_cell: usize,
    lo_cell: usize,
) -> Result<Vec<f64>, String> {
    let hi: Vec<_> = out.sessions.iter().filter(|s| s.cell == hi_cell).collect();
    let lo: Vec<_> = out.sessions.iter().filter(|s| s.cell == lo_cell).collect();
    ensure!(
        hi.len() == lo.len() && !hi.is_empty(),
        "cells of {label} hold {} vs {} sessions",
        hi.len(),
        lo.len()
    );
    let mut diffs = Vec::with_capacity(hi.len());
    for (h, l) in hi.iter().zip(&lo) {
        ensure!(
            h.sentence_id == l.sentence_id && h.trial == l.trial,
            "session pairing broke for {label}"
        );
        diffs.push(h.bleu - l.bleu);
    }
    Ok(diffs)
}

// --- criterion 1: combiner oracles ----------------------------------------

fn criterion_1() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = derive_stream(2026, "acceptance-combiners", 0, 0);
    const CASES: usize = 10_000;

    for case in 0..CASES {
        let k = rng.random_range(1..=5usize);
        let d = rng.random_range(1..=32usize);
        let attempts: Vec<ReceivedAttempt> = (0..k)
            .map(|i| {
                let values: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                // occasional exact zeros exercise the MRC fallback
                let q = if rng.random_range(0..20u32) == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..=1.0)
                };
                ReceivedAttempt {
                    latent: LatentVector::new(values),
                    quality: QualityScore {
                        value: q,
                        metric: MetricTag::B,
                    },
                    k: i + 1,
                }
            })
            .collect();

        // weighted average against a plain weighted-sum oracle
        let wa = combine_weighted_avg(&attempts).map_err(|e| e.to_string())?;
        let den: f64 = attempts.iter().map(|a| a.quality.value.exp()).sum();
        for dim in 0..d {
            let num: f64 = attempts
                .iter()
                .map(|a| a.quality.value.exp() * a.latent.values[dim])
                .sum();
            let err = (wa.latent.values[dim] - num / den).abs();
            ensure!(err <= 1e-12, "case {case}: weighted_avg off by {err:.2e}");
        }

        // MRC against the q²-weight oracle; all-zero quality falls back to
        // the unweighted mean
        let mrc = combine_mrc(&attempts).map_err(|e| e.to_string())?;
        let den: f64 = attempts
            .iter()
            .map(|a| a.quality.value * a.quality.value)
            .sum();
        ensure!(
            mrc.used_fallback == (den == 0.0),
            "case {case}: mrc fallback flag is {} with weight mass {den}",
            mrc.used_fallback
        );
        for dim in 0..d {
            let want = if den == 0.0 {
                attempts.iter().map(|a| a.latent.values[dim]).sum::<f64>() / k as f64
            } else {
                attempts
                    .iter()
                    .map(|a| a.quality.value * a.quality.value * a.latent.values[dim])
                    .sum::<f64>()
                    / den
            };
            let err = (mrc.latent.values[dim] - want).abs();
            ensure!(err <= 1e-12, "case {case}: mrc off by {err:.2e}");
        }

        // best-only returns the argmax-quality input bit-for-bit, ties
        // breaking toward the smallest attempt index
        let bo = combine_best_only(&attempts).map_err(|e| e.to_string())?;
        let mut pick = 0usize;
        for (i, a) in attempts.iter().enumerate() {
            if a.quality.value > attempts[pick].quality.value {
                pick = i;
            }
        }
        for dim in 0..d {
            ensure!(
                bo.latent.values[dim].to_bits() == attempts[pick].latent.values[dim].to_bits(),
                "case {case}: best_only is not bit-identical to attempt {}",
                pick + 1
            );
        }

        // every method stays inside the component-wise hull of its inputs
        let lo: Vec<f64> = (0..d)
            .map(|dim| {
                attempts
                    .iter()
                    .map(|a| a.latent.values[dim])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let hi: Vec<f64> = (0..d)
            .map(|dim| {
                attempts
                    .iter()
                    .map(|a| a.latent.values[dim])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for method in CombinerMethod::ALL {
            let out = combine(&attempts, &CombinerSpec::new(method)).map_err(|e| e.to_string())?;
            for dim in 0..d {
                let v = out.latent.values[dim];
                ensure!(
                    v >= lo[dim] - 1e-9 && v <= hi[dim] + 1e-9,
                    "case {case}: {} left the hull ({v} outside [{}, {}])",
                    method.name(),
                    lo[dim],
                    hi[dim]
                );
            }
        }
    }

    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "oracle suite took {secs:.1} s (budget 10 s)");
    Ok(format!(
        "{CASES} random instances (K ≤ 5, D ≤ 32) agree within 1e-12, hulls hold, {secs:.2} s"
    ))
}

// --- criterion 2: quality estimator examples and range ---------------------

/// Stub codec with a fixed posterior and scripted decode outputs (the last
/// entry repeats).
struct ScriptCodec {
    vocab: Vocabulary,
    dim: usize,
    mu: Vec<f64>,
    log_var: Vec<f64>,
    script: Mutex<(Vec<String>, usize)>,
}

impl ScriptCodec {
    fn new(mu: Vec<f64>, log_var: Vec<f64>, decodes: &[&str]) -> Self {
        let texts: Vec<String> = decodes.iter().map(|s| s.to_string()).collect();
        ScriptCodec {
            vocab: Vocabulary::build(&texts, 64).expect("script vocabulary"),
            dim: mu.len(),
            mu,
            log_var,
            script: Mutex::new((texts, 0)),
        }
    }

    fn next_text(&self) -> String {
        let mut guard = self.script.lock().expect("script lock");
        let i = guard.1.min(guard.0.len() - 1);
        guard.1 += 1;
        guard.0[i].clone()
    }
}

impl SemanticCodec for ScriptCodec {
    fn latent_dim(&self) -> usize {
        self.dim
    }
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn max_len(&self) -> usize {
        16
    }
    fn encode(&self, _s: &TokenizedSentence) -> Result<EncoderOutput, CodecError> {
        Ok(EncoderOutput {
            mu: self.mu.clone(),
            log_var: self.log_var.clone(),
        })
    }
    fn decode(&self, _z: &LatentVector) -> Result<TokenizedSentence, CodecError> {
        Ok(corpus::tokenize(&self.next_text(), &self.vocab, 16))
    }
    fn decode_sampled(
        &self,
        z: &LatentVector,
        _temperature: f64,
        _rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError> {
        self.decode(z)
    }
}

/// Stub whose sampled decode is uniform over `m` distinct one-word texts.
struct UniformStub {
    vocab: Vocabulary,
    m: usize,
}

impl UniformStub {
    fn new(m: usize) -> Self {
        let texts: Vec<String> = (0..m).map(|i| format!("w{i}")).collect();
        UniformStub {
            vocab: Vocabulary::build(&texts, m + 8).expect("uniform stub vocabulary"),
            m,
        }
    }
}

impl SemanticCodec for UniformStub {
    fn latent_dim(&self) -> usize {
        2
    }
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn max_len(&self) -> usize {
        8
    }
    fn encode(&self, _s: &TokenizedSentence) -> Result<EncoderOutput, CodecError> {
        Ok(EncoderOutput {
            mu: vec![0.0; 2],
            log_var: vec![0.0; 2],
        })
    }
    fn decode(&self, _z: &LatentVector) -> Result<TokenizedSentence, CodecError> {
        Ok(corpus::tokenize("w0", &self.vocab, 8))
    }
    fn decode_sampled(
        &self,
        _z: &LatentVector,
        _temperature: f64,
        rng: &mut dyn RngCore,
    ) -> Result<TokenizedSentence, CodecError> {
        let i = rng.random_range(0..self.m);
        Ok(corpus::tokenize(&format!("w{i}"), &self.vocab, 8))
    }
}

fn criterion_2() -> Result<String, String> {
    let started = Instant::now();
    let zv = |values: &[f64]| LatentVector::new(values.to_vec());

    // metric A: q = max(0, 1 − mean σ)
    let a0 = ScriptCodec::new(vec![1.0; 4], vec![f64::NEG_INFINITY; 4], &["a b"]);
    let q = metric_a_vae_uncertainty(&zv(&[0.0; 4]), &a0).map_err(|e| e.to_string())?;
    ensure!(q.value == 1.0, "A with σ = 0 gave {}", q.value);
    let a1 = ScriptCodec::new(vec![0.0; 4], vec![2.0 * 1.5f64.ln(); 4], &["a b"]);
    let q = metric_a_vae_uncertainty(&zv(&[0.0; 4]), &a1).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "A with mean σ = 1.5 gave {}", q.value);
    let a2 = ScriptCodec::new(vec![0.0; 4], vec![2.0 * 0.3f64.ln(); 4], &["a b"]);
    let q = metric_a_vae_uncertainty(&zv(&[0.0; 4]), &a2).map_err(|e| e.to_string())?;
    ensure!((q.value - 0.7).abs() <= 1e-9, "A with mean σ = 0.3 gave {}", q.value);

    // metric B: q = max(0, cos(z̃, μ′)) · max(0, 1 − ‖z̃ − μ′‖/√D)
    let zt = [0.5, -0.25, 1.0];
    let b0 = ScriptCodec::new(zt.to_vec(), vec![0.0; 3], &["a b"]);
    let q = metric_b_self_consistency(&zv(&zt), &b0).map_err(|e| e.to_string())?;
    ensure!((q.value - 1.0).abs() <= 1e-9, "B with μ′ = z̃ gave {}", q.value);
    let b1 = ScriptCodec::new(vec![0.0, 3.0], vec![0.0; 2], &["a b"]);
    let q = metric_b_self_consistency(&zv(&[2.0, 0.0]), &b1).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "B with orthogonal μ′ gave {}", q.value);
    let b2 = ScriptCodec::new(vec![1.0; 4], vec![0.0; 4], &["a b"]);
    let q = metric_b_self_consistency(&zv(&[3.0, 1.0, 1.0, 1.0]), &b2).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "B at distance √D gave {}", q.value);
    let b3 = ScriptCodec::new(vec![0.4; 3], vec![0.0; 3], &["a b"]);
    let q = metric_b_self_consistency(&zv(&[0.0; 3]), &b3).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "B with zero-norm z̃ gave {}", q.value);

    // metric C: agreement fraction with the first decode pass
    let real = scratch_codec();
    let z16 = zv(&[0.25; 16]);
    let mut c_rng = derive_stream(2026, "acceptance-c-greedy", 0, 0);
    let q = metric_c_decoder_entropy(&z16, &real, 6, 0.0, &mut c_rng).map_err(|e| e.to_string())?;
    ensure!(q.value == 1.0, "C with greedy passes gave {}", q.value);
    let c1 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["x", "x", "x", "y"]);
    let mut c_rng = derive_stream(2026, "acceptance-c-script", 0, 0);
    let q = metric_c_decoder_entropy(&zv(&[0.0; 2]), &c1, 4, 1.0, &mut c_rng)
        .map_err(|e| e.to_string())?;
    ensure!(q.value == 0.75, "C on x,x,x,y gave {}", q.value);
    // uniform decodes over M texts: E[q] = (1 + (N−1)/M)/N
    let (n_passes, m) = (5usize, 4usize);
    let stub = UniformStub::new(m);
    let mut u_rng = derive_stream(2026, "acceptance-c-uniform", 0, 0);
    let runs = 4000usize;
    let mut acc = 0.0;
    for _ in 0..runs {
        acc += metric_c_decoder_entropy(&zv(&[0.0; 2]), &stub, n_passes, 1.0, &mut u_rng)
            .map_err(|e| e.to_string())?
            .value;
    }
    let got = acc / runs as f64;
    let want = (1.0 + (n_passes - 1) as f64 / m as f64) / n_passes as f64;
    ensure!(
        (got - want).abs() <= 0.02,
        "C uniform stub mean {got:.4} vs expectation {want:.4}"
    );

    // metric D: q = max(0, 1 − ‖z̃ − μ‖/(‖μ‖ + ε))
    let d0 = ScriptCodec::new(vec![0.6, -0.2, 0.8], vec![0.0; 3], &["a b"]);
    let q = metric_d_latent_distance(&zv(&[0.6, -0.2, 0.8]), &d0, 1e-8)
        .map_err(|e| e.to_string())?;
    ensure!(q.value == 1.0, "D with z̃ = μ gave {}", q.value);
    let d1 = ScriptCodec::new(vec![1.0, 0.0], vec![0.0; 2], &["a b"]);
    let q = metric_d_latent_distance(&zv(&[-2.0, 0.0]), &d1, 1e-8).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "D beyond ‖μ‖ + ε gave {}", q.value);
    let d2 = ScriptCodec::new(vec![0.0, 0.0], vec![0.0; 2], &["a b"]);
    let q = metric_d_latent_distance(&zv(&[0.3, 0.0]), &d2, 1e-8).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "D with μ = 0 gave {}", q.value);

    // metric E: unsmoothed BLEU-1 of the round trip
    let e0 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b c", "a b c"]);
    let q = metric_e_text_bleu(&zv(&[0.0; 2]), &e0, true).map_err(|e| e.to_string())?;
    ensure!(q.value == 1.0, "E on identical texts gave {}", q.value);
    let e1 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b", "c d"]);
    let q = metric_e_text_bleu(&zv(&[0.0; 2]), &e1, true).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "E on disjoint texts gave {}", q.value);
    let e2 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b b", "a b c"]);
    let q = metric_e_text_bleu(&zv(&[0.0; 2]), &e2, true).map_err(|e| e.to_string())?;
    ensure!(
        (q.value - 2.0 / 3.0).abs() <= 1e-9,
        "E clipped-precision example gave {}",
        q.value
    );

    // metric F: Jaccard index of the round-trip token sets
    let f0 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b", "a b"]);
    let q = metric_f_text_similarity(&zv(&[0.0; 2]), &f0).map_err(|e| e.to_string())?;
    ensure!(q.value == 1.0, "F on identical sets gave {}", q.value);
    let f1 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b", "c d"]);
    let q = metric_f_text_similarity(&zv(&[0.0; 2]), &f1).map_err(|e| e.to_string())?;
    ensure!(q.value == 0.0, "F on disjoint sets gave {}", q.value);
    let f2 = ScriptCodec::new(vec![0.0; 2], vec![0.0; 2], &["a b", "b c"]);
    let q = metric_f_text_similarity(&zv(&[0.0; 2]), &f2).map_err(|e| e.to_string())?;
    ensure!(
        (q.value - 1.0 / 3.0).abs() <= 1e-9,
        "F overlap example gave {}",
        q.value
    );

    // the dispatcher routes each tag to its metric function
    for (i, tag) in MetricTag::ALL.into_iter().enumerate() {
        let cfg = QualityConfig::with_metric(tag);
        let mut r1 = derive_stream(2026, "acceptance-dispatch", i as u64, 0);
        let mut r2 = derive_stream(2026, "acceptance-dispatch", i as u64, 0);
        let via_estimate = estimate(&z16, &cfg, &real, &mut r1).map_err(|e| e.to_string())?;
        let direct = match tag {
            MetricTag::A => metric_a_vae_uncertainty(&z16, &real),
            MetricTag::B => metric_b_self_consistency(&z16, &real),
            MetricTag::C => {
                metric_c_decoder_entropy(&z16, &real, cfg.n_passes, cfg.temperature, &mut r2)
            }
            MetricTag::D => metric_d_latent_distance(&z16, &real, cfg.epsilon),
            MetricTag::E => metric_e_text_bleu(&z16, &real, cfg.bleu_brevity_penalty),
            MetricTag::F => metric_f_text_similarity(&z16, &real),
        }
        .map_err(|e| e.to_string())?;
        ensure!(
            via_estimate.metric == tag
                && via_estimate.value.to_bits() == direct.value.to_bits(),
            "estimate() does not route tag {tag} to its metric"
        );
    }

    // decode/encode budget per estimate, including C's N decode passes
    let counting = CountingCodec::new(&real);
    let budgets = [
        (MetricTag::A, 1, 1),
        (MetricTag::B, 2, 1),
        (MetricTag::C, 8, 0),
        (MetricTag::D, 1, 1),
        (MetricTag::E, 2, 1),
        (MetricTag::F, 2, 1),
    ];
    for (tag, decodes, encodes) in budgets {
        counting.reset();
        let mut cfg = QualityConfig::with_metric(tag);
        cfg.n_passes = 8;
        let mut r = derive_stream(2026, "acceptance-overhead", 0, 0);
        estimate(&z16, &cfg, &counting, &mut r).map_err(|e| e.to_string())?;
        ensure!(
            counting.decode_calls() == decodes && counting.encode_calls() == encodes,
            "metric {tag} used {} decodes / {} encodes (expected {decodes}/{encodes})",
            counting.decode_calls(),
            counting.encode_calls()
        );
    }

    // randomized range check: every metric maps arbitrary latents into [0, 1]
    const CASES: usize = 10_000;
    let mut rng = derive_stream(2026, "acceptance-quality-range", 0, 0);
    let configs: Vec<QualityConfig> = MetricTag::ALL
        .into_iter()
        .map(QualityConfig::with_metric)
        .collect();
    for case in 0..CASES {
        let scale = [0.05, 0.5, 2.0, 6.0][case % 4];
        let z = if case % 97 == 0 {
            LatentVector::new(vec![0.0; 16])
        } else {
            LatentVector::new((0..16).map(|_| rng.random_range(-scale..=scale)).collect())
        };
        for cfg in &configs {
            let q = estimate(&z, cfg, &real, &mut rng)
                .map_err(|e| format!("case {case}, metric {}: {e}", cfg.metric))?;
            ensure!(
                q.value.is_finite() && (0.0..=1.0).contains(&q.value),
                "case {case}: metric {} returned {}",
                cfg.metric,
                q.value
            );
        }
    }

    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "quality suite took {secs:.1} s (budget 30 s)");
    Ok(format!(
        "analytic examples exact, {CASES} random latents × 6 metrics in [0, 1], {secs:.1} s"
    ))
}

// --- criterion 3: channel statistics ---------------------------------------

fn criterion_3() -> Result<String, String> {
    let vae = scratch_codec();
    let sentences: Vec<String> = bundled_corpus().into_iter().take(32).collect();
    let mut pz_rng = derive_stream(2026, "acceptance-p-z", 0, 0);
    let power =
        measure_latent_power(&vae, &sentences, 4000, &mut pz_rng).map_err(|e| e.to_string())?;
    let variance = noise_variance(0.0, power.p_z);

    let encs: Vec<EncoderOutput> = sentences
        .iter()
        .map(|s| vae.encode(&vae.tokenize(s)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    // 6272 latents × 16 dims = 100 352 noisy dimensions
    let mut rng = derive_stream(2026, "acceptance-channel", 0, 0);
    let (mut sum_sig, mut sum_noise, mut sum_noise_sq) = (0.0, 0.0, 0.0);
    let mut dims = 0usize;
    for i in 0..6272usize {
        let z = encs[i % encs.len()].sample_latent(&mut rng);
        let rx = apply_awgn(&z, variance, &mut rng).map_err(|e| e.to_string())?;
        for (tx, out) in z.values.iter().zip(&rx.values) {
            let n = out - tx;
            sum_sig += tx * tx;
            sum_noise += n;
            sum_noise_sq += n * n;
            dims += 1;
        }
    }
    ensure!(dims >= 100_000, "only {dims} noisy dimensions sampled");

    let snr_emp = 10.0 * (sum_sig / sum_noise_sq).log10();
    ensure!(
        snr_emp.abs() <= 0.2,
        "empirical SNR {snr_emp:+.3} dB departs from nominal 0 dB by more than 0.2"
    );
    let mean_noise = sum_noise / dims as f64;
    let sd = (sum_noise_sq / dims as f64 - mean_noise * mean_noise).sqrt();
    let se = sd / (dims as f64).sqrt();
    ensure!(
        mean_noise.abs() <= 5.0 * se,
        "noise mean {mean_noise:+.2e} exceeds 5 SE ({se:.2e})"
    );
    Ok(format!(
        "{dims} noisy dims: empirical SNR {snr_emp:+.3} dB, noise mean {:.1} SE from 0",
        mean_noise.abs() / se
    ))
}

// --- criterion 4: gradient check -------------------------------------------

fn criterion_4() -> Result<String, String> {
    // hand value: μ = 0, σ = 1, λ = 0.25, D = 4 — every inner term clamps to
    // 0.25, so the free-bits term is exactly −0.5
    let enc = EncoderOutput {
        mu: vec![0.0; 4],
        log_var: vec![0.0; 4],
    };
    let kl = kl_free_bits(&enc, 0.25);
    ensure!(kl == -0.5, "free-bits hand value came out {kl}, want -0.5");

    // analytic gradients vs central finite differences on a micro-batch
    let sentences = vec![
        "the relay hums".to_string(),
        "a probe drifts west".to_string(),
        "the beacon stays dark".to_string(),
        "every channel carries noise".to_string(),
    ];
    let vocab = Vocabulary::build(&sentences, 64).map_err(|e| e.to_string())?;
    let mut init_rng = derive_stream(2026, "acceptance-grad", 0, 0);
    let vae = LinearVae::init_random(CodecConfig::new(3, 8), vocab, 1.0, &mut init_rng);
    let toks: Vec<TokenizedSentence> = sentences.iter().take(2).map(|s| vae.tokenize(s)).collect();
    let eps = vec![vec![0.3, -0.2, 0.5], vec![-0.4, 0.1, 0.2]];
    let noise = vec![vec![0.05, -0.1, 0.0], vec![0.2, 0.0, -0.15]];
    let batch = TrainingBatch {
        sentences: &toks,
        eps: &eps,
        noise: &noise,
    };
    let lp = LossParams {
        beta: 0.7,
        lambda_free: 0.25,
        label_smoothing: 0.1,
        kl_convention: KlConvention::ClampedPositive,
    };

    let (_, grads) = batch_loss_grads(&vae, &batch, &lp).map_err(|e| e.to_string())?;
    let n = vae.params().flat_len();
    let mut analytic = Vec::with_capacity(n);
    let mut fd = Vec::with_capacity(n);
    for i in 0..n {
        analytic.push(grads.get_flat(i));
        let h = 1e-5 * vae.params().get_flat(i).abs().max(1.0);
        let probe = |delta: f64| -> Result<f64, String> {
            let mut v = vae.clone();
            v.params_mut().add_flat(i, delta);
            batch_loss(&v, &batch, &lp).map_err(|e| e.to_string())
        };
        fd.push((probe(h)? - probe(-h)?) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&analytic).max(norm(&fd)).max(f64::MIN_POSITIVE);
    ensure!(
        rel <= 1e-4,
        "gradient relative error {rel:.2e} over {n} parameters (budget 1e-4)"
    );
    Ok(format!(
        "{n} parameters: finite-difference relative error {rel:.1e}; free-bits hand value exact"
    ))
}

// --- criterion 5: training efficacy -----------------------------------------

fn criterion_5() -> Result<String, String> {
    let fx = fixture()?;
    let gain = fx.trained.bleu4 - fx.untrained.bleu4;
    ensure!(
        gain >= 0.3,
        "validation BLEU-4 gain {gain:.3} < 0.3 (trained {:.3}, untrained {:.3})",
        fx.trained.bleu4,
        fx.untrained.bleu4
    );
    ensure!(
        fx.train_secs < 300.0,
        "training took {:.0} s (budget 300 s)",
        fx.train_secs
    );
    Ok(format!(
        "val BLEU-4 {:.3} vs untrained {:.3} (gain {gain:+.3}) in {:.1} s",
        fx.trained.bleu4, fx.untrained.bleu4, fx.train_secs
    ))
}

// --- criterion 6: session invariants and threshold monotonicity -------------

fn criterion_6() -> Result<String, String> {
    let fx = fixture()?;
    let vae = &fx.vae_a;
    let sentences = &fx.split.test;
    let mut pz_rng = derive_stream(2026, "acceptance-harq-p-z", 0, 0);
    let power = measure_latent_power(vae, &sentences[..16], 1000, &mut pz_rng)
        .map_err(|e| e.to_string())?;
    let channel = Channel::new(
        ChannelConfig {
            snr_db: 0.0,
            bias_mode: BiasMode::None,
            seed: 0,
        },
        power.p_z,
    )
    .map_err(|e| e.to_string())?;
    // metric D spans the whole n_tx range at 0 dB, so thresholds bite
    let base_cfg = |q_th: f64| HarqConfig {
        q_th,
        k_max: 5,
        quality: QualityConfig::with_metric(MetricTag::D),
        combiner: CombinerSpec::new(CombinerMethod::WeightedAvg),
    };

    // stop rule and budget bounds over random thresholds
    let mut th_rng = derive_stream(2026, "acceptance-harq-th", 0, 0);
    for i in 0..600u64 {
        let q_th = th_rng.random_range(-0.1..1.1);
        let cfg = base_cfg(q_th);
        let mut rng = derive_stream(2026, "acceptance-harq-inv", i, 0);
        let s = &sentences[i as usize % sentences.len()];
        let res = run_session(s, vae, vae, &channel, &cfg, &mut rng).map_err(|e| e.to_string())?;
        ensure!(
            (1..=5).contains(&res.n_transmissions) && res.attempts.len() == res.n_transmissions,
            "session {i}: n_tx {} with {} attempts",
            res.n_transmissions,
            res.attempts.len()
        );
        match res.ack_at {
            Some(k) => {
                ensure!(
                    k == res.n_transmissions
                        && res.attempts[k - 1].quality.value >= q_th
                        && res.attempts[..k - 1].iter().all(|a| a.quality.value < q_th),
                    "session {i}: ACK at {k} violates the stop rule"
                );
            }
            None => {
                ensure!(
                    res.n_transmissions == 5
                        && res.attempts.iter().all(|a| a.quality.value < q_th),
                    "session {i}: NACK run violates the stop rule"
                );
            }
        }
    }

    // mean load must not fall as the threshold rises; sessions are paired
    // through identical rng streams
    let thresholds = [0.2, 0.4, 0.6];
    let sessions = 600usize;
    let mut loads: Vec<Vec<f64>> = Vec::new();
    for &q_th in &thresholds {
        let cfg = base_cfg(q_th);
        let mut ntx = Vec::with_capacity(sessions);
        for i in 0..sessions {
            let mut rng = derive_stream(2026, "acceptance-harq-pair", i as u64, 0);
            let s = &sentences[i % sentences.len()];
            let res =
                run_session(s, vae, vae, &channel, &cfg, &mut rng).map_err(|e| e.to_string())?;
            ntx.push(res.n_transmissions as f64);
        }
        loads.push(ntx);
    }
    let means: Vec<f64> = loads
        .iter()
        .map(|l| l.iter().sum::<f64>() / l.len() as f64)
        .collect();
    let mut boot = derive_stream(2026, "acceptance-harq-boot", 0, 0);
    for w in 0..thresholds.len() - 1 {
        let diffs: Vec<f64> = loads[w + 1]
            .iter()
            .zip(&loads[w])
            .map(|(hi, lo)| hi - lo)
            .collect();
        let (dm, lo, _hi) = bootstrap_mean_ci(&diffs, &mut boot);
        ensure!(
            dm >= 0.0 && lo >= -1e-12,
            "mean load fell from threshold {} to {} (Δ {dm:+.3}, CI lower {lo:+.3})",
            thresholds[w],
            thresholds[w + 1]
        );
    }
    Ok(format!(
        "600 sessions hold the stop rule; mean n_tx {:.2} → {:.2} → {:.2} over thresholds {:?}",
        means[0], means[1], means[2], thresholds
    ))
}

// --- criterion 7: diversity gain under codec mismatch -----------------------

fn criterion_7() -> Result<String, String> {
    let fx = fixture()?;
    let started = Instant::now();
    let mut plan = ExperimentPlan::new(SweepKind::IkSweep);
    plan.scenario = Scenario::Misaligned;
    plan.seed = 2026;
    plan.snr_db = f64::INFINITY;
    plan.k_values = vec![1, 5];
    plan.combiners = vec![CombinerMethod::Chase, CombinerMethod::WeightedAvg];
    let pair = CodecPair {
        a: &fx.vae_a,
        b: &fx.vae_b,
    };
    let out = run_sweep(&plan, &pair).map_err(|e| e.to_string())?;

    let mut boot = derive_stream(2026, "acceptance-c7-boot", 0, 0);
    let chase = paired_bleu_diffs(&out, "chase", 5.0, 1.0)?;
    let (c_mean, c_lo, c_hi) = bootstrap_mean_ci(&chase, &mut boot);
    ensure!(
        c_lo <= 0.0 && 0.0 <= c_hi,
        "chase K5−K1 CI [{c_lo:+.4}, {c_hi:+.4}] excludes 0 on a noiseless channel"
    );
    let wavg = paired_bleu_diffs(&out, "weighted_avg", 5.0, 1.0)?;
    let (w_mean, w_lo, w_hi) = bootstrap_mean_ci(&wavg, &mut boot);
    ensure!(
        w_lo > 0.0,
        "weighted-avg K5−K1 CI [{w_lo:+.4}, {w_hi:+.4}] does not clear 0"
    );
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 180.0, "sweep took {secs:.0} s (budget 180 s)");
    Ok(format!(
        "chase ΔBLEU {c_mean:+.4} (CI straddles 0), weighted avg {w_mean:+.4} (CI [{w_lo:+.4}, {w_hi:+.4}] above 0), {secs:.0} s"
    ))
}

// --- criterion 8: aligned channel, BLEU monotone in K -----------------------

fn criterion_8() -> Result<String, String> {
    let fx = fixture()?;
    let mut plan = ExperimentPlan::new(SweepKind::IkSweep);
    plan.seed = 2027;
    plan.combiners = vec![
        CombinerMethod::Chase,
        CombinerMethod::WeightedAvg,
        CombinerMethod::Mrc,
        CombinerMethod::Iterative,
    ];
    let pair = CodecPair::aligned(&fx.vae_a);
    let out = run_sweep(&plan, &pair).map_err(|e| e.to_string())?;

    let mut boot = derive_stream(2027, "acceptance-c8-boot", 0, 0);
    let mut steps = 0usize;
    let mut tightest = (f64::INFINITY, String::new());
    for method in &plan.combiners {
        for k in 1..5usize {
            let diffs = paired_bleu_diffs(&out, method.name(), (k + 1) as f64, k as f64)?;
            let (dm, _lo, hi) = bootstrap_mean_ci(&diffs, &mut boot);
            ensure!(
                hi >= 0.0,
                "{}: BLEU drops from K={k} to K={} beyond the CI (Δ {dm:+.4}, CI upper {hi:+.4})",
                method.name(),
                k + 1
            );
            if hi < tightest.0 {
                tightest = (hi, format!("{} K{}→K{}", method.name(), k, k + 1));
            }
            steps += 1;
        }
    }
    Ok(format!(
        "{steps} adjacent-K steps over 4 combiners at 0 dB all non-decreasing within CI (tightest upper bound {:+.4} at {})",
        tightest.0, tightest.1
    ))
}

// --- criterion 9: selection vs combining across SNR -------------------------

fn criterion_9() -> Result<String, String> {
    let fx = fixture()?;
    let mut plan = ExperimentPlan::new(SweepKind::CombiningSweep);
    plan.seed = 2028;
    plan.snr_values_db = vec![-9.0, 9.0];
    plan.combiners = vec![
        CombinerMethod::Chase,
        CombinerMethod::WeightedAvg,
        CombinerMethod::BestOnly,
    ];
    let pair = CodecPair {
        a: &fx.vae_a,
        b: &fx.vae_b,
    };
    let out = run_sweep(&plan, &pair).map_err(|e| e.to_string())?;

    // at −9 dB a single kept attempt must lose to averaging all five
    let mut boot = derive_stream(2028, "acceptance-c9-boot", 0, 0);
    let diffs = paired_bleu_diffs_series(&out, "chase", "best_only", -9.0)?;
    let (dm, lo, _hi) = bootstrap_mean_ci(&diffs, &mut boot);
    ensure!(
        dm > 0.0,
        "best-only mean BLEU is not below chase at −9 dB (Δ {dm:+.4})"
    );
    let separation = if lo > 0.0 {
        "CI-separated"
    } else {
        "CIs overlap, means ordered"
    };

    // the best-only gap to weighted averaging must shrink toward high SNR
    let gap_lo = row_bleu_mean(&out, "weighted_avg", -9.0)? - row_bleu_mean(&out, "best_only", -9.0)?;
    let gap_hi = row_bleu_mean(&out, "weighted_avg", 9.0)? - row_bleu_mean(&out, "best_only", 9.0)?;
    ensure!(
        gap_hi < gap_lo,
        "best-only vs weighted-avg gap grew with SNR ({gap_lo:+.4} at −9 dB, {gap_hi:+.4} at +9 dB)"
    );
    Ok(format!(
        "chase beats best-only by {dm:+.4} at −9 dB ({separation}); weighted-avg gap {gap_lo:.4} → {gap_hi:.4} from −9 to +9 dB"
    ))
}

// --- criterion 10: reproducibility and runtime ------------------------------

fn criterion_10() -> Result<String, String> {
    let fx = fixture()?;
    let kinds = [
        SweepKind::IkSweep,
        SweepKind::CombiningSweep,
        SweepKind::QualitySnrSweep,
        SweepKind::QualityThresholdSweep,
    ];
    let mut first_pass_secs = 0.0;
    let mut cells = 0usize;
    let mut sessions = 0usize;
    for kind in kinds {
        let plan = ExperimentPlan::new(kind);
        let pair = match plan.scenario {
            Scenario::Aligned => CodecPair::aligned(&fx.vae_a),
            Scenario::Misaligned => CodecPair {
                a: &fx.vae_a,
                b: &fx.vae_b,
            },
        };
        let started = Instant::now();
        let first = run_sweep(&plan, &pair).map_err(|e| e.to_string())?;
        first_pass_secs += started.elapsed().as_secs_f64();
        let second = run_sweep(&plan, &pair).map_err(|e| e.to_string())?;
        ensure!(
            csv_string(&first.result) == csv_string(&second.result),
            "{} CSV differs between same-seed runs",
            kind.name()
        );
        let j1 = jsonl_string(&first).map_err(|e| e.to_string())?;
        let j2 = jsonl_string(&second).map_err(|e| e.to_string())?;
        ensure!(
            j1 == j2,
            "{} session log differs between same-seed runs",
            kind.name()
        );
        cells += first.result.rows.len();
        sessions += first.sessions.len();
    }
    ensure!(
        first_pass_secs < 600.0,
        "default sweep suite took {first_pass_secs:.0} s (budget 600 s)"
    );
    Ok(format!(
        "4 default sweeps ({cells} cells, {sessions} sessions) byte-identical on rerun; single pass {first_pass_secs:.0} s"
    ))
}
