//! Experiment protocols: configurable sweeps over retransmission budget,
//! channel SNR, quality metric, and ACK threshold.
//!
//! Every sweep shares the same engine. A plan expands into a list of cells
//! (one per axis combination); each cell runs `n_sentences × n_trials`
//! sessions. Session randomness is keyed only by `(seed, sentence, trial)` —
//! not by the cell — so cells are paired through common random numbers and
//! per-cell differences are not washed out by fresh noise draws.
//!
//! Outputs per sweep: a CSV of per-cell aggregates with bootstrap 95%
//! confidence half-widths, a JSONL log with one record per session, a JSON
//! meta file with every knob needed to reproduce the run, and an SVG chart.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    measure_latent_power, BiasMode, Channel, ChannelConfig, ChannelError, LATENT_POWER_SAMPLES,
};
use crate::chart::{self, ChartError, ChartSeries, ChartSpec};
use crate::codec::{CodecError, SemanticCodec};
use crate::combining::{CombinerMethod, CombinerSpec};
use crate::corpus::{self, CorpusError};
use crate::harq::{self, HarqConfig, HarqError};
use crate::metrics;
use crate::quality::MetricTag;
use crate::rng::derive_stream;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Harq(#[from] HarqError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("cannot write sweep outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which experiment protocol a plan drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Fixed-K retransmission sweep: combiner × K, forced sessions.
    IkSweep,
    /// Combiner × channel SNR at a fixed retransmission budget.
    CombiningSweep,
    /// Quality metric × channel SNR, adaptive threshold-gated sessions.
    QualitySnrSweep,
    /// Quality metric × ACK threshold at a fixed SNR, adaptive sessions.
    QualityThresholdSweep,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::IkSweep => "ik-sweep",
            SweepKind::CombiningSweep => "combining-sweep",
            SweepKind::QualitySnrSweep => "quality-snr-sweep",
            SweepKind::QualityThresholdSweep => "quality-threshold-sweep",
        }
    }
}

/// Codec arrangement for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Transmit and receive with the same codec.
    Aligned,
    /// Transmit with codec A, decode and score with codec B.
    Misaligned,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aligned" => Ok(Scenario::Aligned),
            "misaligned" => Ok(Scenario::Misaligned),
            other => Err(format!(
                "unknown scenario {other:?} (expected aligned or misaligned)"
            )),
        }
    }
}

/// Full description of one sweep run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: SweepKind,
    pub scenario: Scenario,
    pub seed: u64,
    /// Corpus split seed; keep equal to the training seed so the test
    /// sentences stay unseen.
    pub split_seed: u64,
    pub n_sentences: usize,
    pub n_trials: usize,

    /// Retransmission budgets (ik sweep axis).
    pub k_values: Vec<usize>,
    /// SNR axis in dB (combining and quality-SNR sweeps).
    pub snr_values_db: Vec<f64>,
    /// ACK threshold axis (quality-threshold sweep).
    pub thresholds: Vec<f64>,
    /// Metric axis (quality sweeps).
    pub metrics: Vec<MetricTag>,
    /// Combiner axis (ik and combining sweeps).
    pub combiners: Vec<CombinerMethod>,

    /// Channel SNR for sweeps that do not scan it.
    pub snr_db: f64,
    /// Retransmission budget for the combining sweep.
    pub k_fixed: usize,
    /// Session policy: ACK threshold, budget, weight metric, and the
    /// combiner used by the quality sweeps.
    pub harq: HarqConfig,
    /// Optional systematic channel shift (aligned scenario only).
    pub synthetic_bias_scale: Option<f64>,
    /// Seed for the bias direction.
    pub channel_seed: u64,
}

impl ExperimentPlan {
    /// Spec defaults for a protocol. The scenario follows the experiment the
    /// protocol reproduces: the ik sweep starts aligned, everything else
    /// assumes codec mismatch.
    pub fn new(kind: SweepKind) -> Self {
        let scenario = match kind {
            SweepKind::IkSweep => Scenario::Aligned,
            _ => Scenario::Misaligned,
        };
        ExperimentPlan {
            kind,
            scenario,
            seed: 0,
            split_seed: 0,
            n_sentences: 30,
            n_trials: 20,
            k_values: vec![1, 2, 3, 4, 5],
            snr_values_db: vec![-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0],
            thresholds: (1..=9).map(|i| i as f64 / 10.0).collect(),
            metrics: MetricTag::ALL.to_vec(),
            combiners: CombinerMethod::ALL.to_vec(),
            snr_db: 0.0,
            k_fixed: 5,
            harq: HarqConfig::default(),
            synthetic_bias_scale: None,
            channel_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: String| Err(SweepError::InvalidPlan(m));
        if self.n_sentences == 0 || self.n_trials == 0 {
            return fail("n_sentences and n_trials must be >= 1".into());
        }
        match self.kind {
            SweepKind::IkSweep => {
                if self.k_values.is_empty() {
                    return fail("ik sweep needs at least one K value".into());
                }
                if self.k_values.iter().any(|k| *k == 0) {
                    return fail("K values must be >= 1".into());
                }
                if self.combiners.is_empty() {
                    return fail("ik sweep needs at least one combiner".into());
                }
            }
            SweepKind::CombiningSweep => {
                if self.snr_values_db.is_empty() {
                    return fail("combining sweep needs at least one SNR".into());
                }
                if self.combiners.is_empty() {
                    return fail("combining sweep needs at least one combiner".into());
                }
                if self.k_fixed == 0 {
                    return fail("k_fixed must be >= 1".into());
                }
            }
            SweepKind::QualitySnrSweep => {
                if self.snr_values_db.is_empty() {
                    return fail("quality-snr sweep needs at least one SNR".into());
                }
                if self.metrics.is_empty() {
                    return fail("quality-snr sweep needs at least one metric".into());
                }
            }
            SweepKind::QualityThresholdSweep => {
                if self.thresholds.is_empty() {
                    return fail("threshold sweep needs at least one threshold".into());
                }
                if self.metrics.is_empty() {
                    return fail("threshold sweep needs at least one metric".into());
                }
                if self.thresholds.iter().any(|t| !t.is_finite()) {
                    return fail("thresholds must be finite".into());
                }
            }
        }
        if self.snr_values_db.iter().any(|s| s.is_nan()) || self.snr_db.is_nan() {
            return fail("SNR values must not be NaN".into());
        }
        if self.scenario == Scenario::Misaligned && self.synthetic_bias_scale.is_some() {
            return fail(
                "synthetic bias and the misaligned scenario are separate distortion \
                 sources; configure one or the other"
                    .into(),
            );
        }
        self.harq
            .validate()
            .map_err(|e| SweepError::InvalidPlan(e.to_string()))?;
        Ok(())
    }

    fn bias_mode(&self) -> BiasMode {
        match (self.scenario, self.synthetic_bias_scale) {
            (Scenario::Misaligned, _) => BiasMode::MisalignedCodec,
            (Scenario::Aligned, Some(scale)) => BiasMode::Synthetic { scale },
            (Scenario::Aligned, None) => BiasMode::None,
        }
    }
}

/// Transmit/receive codecs for a run. Aligned scenarios may pass the same
/// codec twice.
pub struct CodecPair<'a> {
    pub a: &'a dyn SemanticCodec,
    pub b: &'a dyn SemanticCodec,
}

impl<'a> CodecPair<'a> {
    pub fn aligned(codec: &'a dyn SemanticCodec) -> Self {
        CodecPair { a: codec, b: codec }
    }

    fn rx(&self, scenario: Scenario) -> &'a dyn SemanticCodec {
        match scenario {
            Scenario::Aligned => self.a,
            Scenario::Misaligned => self.b,
        }
    }
}

/// One axis combination.
#[derive(Debug, Clone)]
struct Cell {
    series: String,
    x: f64,
    harq: HarqConfig,
    snr_db: f64,
    forced_k: Option<usize>,
}

/// Per-cell aggregate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub series: String,
    pub x: f64,
    pub bleu_mean: f64,
    pub bleu_ci: f64,
    pub sim_mean: f64,
    pub sim_ci: f64,
    pub ntx_mean: f64,
    pub ntx_ci: f64,
    pub n_sessions: usize,
}

/// One session's log entry (cell identified by index into the row list).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    pub cell: usize,
    pub sentence_id: usize,
    pub trial: usize,
    pub attempts: Vec<AttemptRecord>,
    pub n_tx: usize,
    pub bleu: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub q: f64,
    pub snr_db: f64,
}

/// Dynamic-range summary entry for the threshold sweep: how much the mean
/// transmission count moves across the threshold axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRange {
    pub metric: String,
    pub ntx_min: f64,
    pub ntx_max: f64,
    pub span: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Reproducibility envelope written next to every result table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMeta {
    pub format_version: u32,
    pub kind: SweepKind,
    pub scenario: Scenario,
    pub seed: u64,
    pub split_seed: u64,
    pub channel_seed: u64,
    pub series_label: String,
    pub x_label: String,
    pub n_sentences: usize,
    pub n_trials: usize,
    pub p_z: f64,
    pub p_z_samples: usize,
    /// Corpus-level text score: BLEU-4 with add-one smoothing.
    pub bleu_order: usize,
    pub bleu_smoothing: bool,
    /// Latent similarity reported in `sim_*`: cosine of the receive codec's
    /// posterior means for the decoded and reference sentences.
    pub similarity: String,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub harq: HarqConfig,
    pub snr_db_fixed: f64,
    pub k_fixed: usize,
    pub synthetic_bias_scale: Option<f64>,
    pub sentences: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic_range: Option<Vec<DynamicRange>>,
}

/// Aggregated sweep result.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// CSV header name of the series axis (`combiner` or `metric`).
    pub series_label: String,
    /// CSV header name of the x axis (`k`, `snr_db`, or `q_th`).
    pub x_label: String,
    pub rows: Vec<SweepRow>,
}

/// Everything a sweep produces, in memory.
pub struct SweepOutput {
    pub result: SweepResult,
    pub sessions: Vec<SessionRecord>,
    pub meta: SweepMeta,
}

fn axis_labels(kind: SweepKind) -> (&'static str, &'static str) {
    match kind {
        SweepKind::IkSweep => ("combiner", "k"),
        SweepKind::CombiningSweep => ("combiner", "snr_db"),
        SweepKind::QualitySnrSweep => ("metric", "snr_db"),
        SweepKind::QualityThresholdSweep => ("metric", "q_th"),
    }
}

fn build_cells(plan: &ExperimentPlan) -> Vec<Cell> {
    let mut cells = Vec::new();
    match plan.kind {
        SweepKind::IkSweep => {
            for &combiner in &plan.combiners {
                for &k in &plan.k_values {
                    let mut harq = plan.harq.clone();
                    harq.combiner = CombinerSpec {
                        method: combiner,
                        iterative_update: plan.harq.combiner.iterative_update,
                    };
                    harq.k_max = harq.k_max.max(k);
                    cells.push(Cell {
                        series: combiner.name().to_string(),
                        x: k as f64,
                        harq,
                        snr_db: plan.snr_db,
                        forced_k: Some(k),
                    });
                }
            }
        }
        SweepKind::CombiningSweep => {
            for &combiner in &plan.combiners {
                for &snr in &plan.snr_values_db {
                    let mut harq = plan.harq.clone();
                    harq.combiner = CombinerSpec {
                        method: combiner,
                        iterative_update: plan.harq.combiner.iterative_update,
                    };
                    harq.k_max = harq.k_max.max(plan.k_fixed);
                    cells.push(Cell {
                        series: combiner.name().to_string(),
                        x: snr,
                        harq,
                        snr_db: snr,
                        forced_k: Some(plan.k_fixed),
                    });
                }
            }
        }
        SweepKind::QualitySnrSweep => {
            for &metric in &plan.metrics {
                for &snr in &plan.snr_values_db {
                    let mut harq = plan.harq.clone();
                    harq.quality.metric = metric;
                    cells.push(Cell {
                        series: metric.name().to_string(),
                        x: snr,
                        harq,
                        snr_db: snr,
                        forced_k: None,
                    });
                }
            }
        }
        SweepKind::QualityThresholdSweep => {
            for &metric in &plan.metrics {
                for &th in &plan.thresholds {
                    let mut harq = plan.harq.clone();
                    harq.quality.metric = metric;
                    harq.q_th = th;
                    cells.push(Cell {
                        series: metric.name().to_string(),
                        x: th,
                        harq,
                        snr_db: plan.snr_db,
                        forced_k: None,
                    });
                }
            }
        }
    }
    cells
}

/// Test-split sentences for a plan, in split order.
pub fn plan_sentences(plan: &ExperimentPlan) -> Result<Vec<String>, SweepError> {
    let all = corpus::bundled_corpus();
    let split = corpus::split_corpus(&all, corpus::DEFAULT_SPLIT_RATIOS, plan.split_seed)?;
    if plan.n_sentences > split.test.len() {
        return Err(SweepError::InvalidPlan(format!(
            "plan wants {} sentences but the test split has {}",
            plan.n_sentences,
            split.test.len()
        )));
    }
    Ok(split.test[..plan.n_sentences].to_vec())
}

/// Percentile-bootstrap mean and 95% half-width.
fn bootstrap_ci(values: &[f64], rng: &mut impl rand::Rng) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = |p: f64| (((BOOTSTRAP_RESAMPLES - 1) as f64) * p).round() as usize;
    let lo = means[idx(0.025)];
    let hi = means[idx(0.975)];
    (mean, (hi - lo) / 2.0)
}

/// Runs the plan and aggregates per cell.
pub fn run_sweep(plan: &ExperimentPlan, codecs: &CodecPair) -> Result<SweepOutput, SweepError> {
    plan.validate()?;
    let sentences = plan_sentences(plan)?;
    let tx = codecs.a;
    let rx = codecs.rx(plan.scenario);

    let mut pz_rng = derive_stream(plan.seed, "p-z", 0, 0);
    let power = measure_latent_power(tx, &sentences, LATENT_POWER_SAMPLES, &mut pz_rng)?;

    let cells = build_cells(plan);
    let channels: Vec<Channel> = cells
        .iter()
        .map(|c| {
            Channel::new(
                ChannelConfig {
                    snr_db: c.snr_db,
                    bias_mode: plan.bias_mode(),
                    seed: plan.channel_seed,
                },
                power.p_z,
            )
        })
        .collect::<Result<_, _>>()?;

    let per_cell = plan.n_sentences * plan.n_trials;
    let jobs: Vec<(usize, usize, usize)> = (0..cells.len())
        .flat_map(|c| {
            (0..plan.n_sentences)
                .flat_map(move |s| (0..plan.n_trials).map(move |t| (c, s, t)))
        })
        .collect();

    let sessions: Result<Vec<SessionRecord>, SweepError> = jobs
        .par_iter()
        .map(|&(c, s, t)| {
            let cell = &cells[c];
            let mut rng = derive_stream(plan.seed, "session", s as u64, t as u64);
            let outcome = match cell.forced_k {
                Some(k) => harq::run_forced(
                    &sentences[s],
                    tx,
                    rx,
                    &channels[c],
                    &cell.harq,
                    k,
                    &mut rng,
                )?,
                None => {
                    harq::run_session(&sentences[s], tx, rx, &channels[c], &cell.harq, &mut rng)?
                }
            };
            let cand = corpus::split_words(&outcome.decoded);
            let reference = corpus::split_words(&sentences[s]);
            let bleu = metrics::bleu(&cand, &reference, 4, true).value;
            let similarity = metrics::cosine_similarity(&outcome.decoded, &sentences[s], rx).value;
            Ok(SessionRecord {
                cell: c,
                sentence_id: s,
                trial: t,
                attempts: outcome
                    .attempts
                    .iter()
                    .map(|a| AttemptRecord {
                        q: a.quality.value,
                        snr_db: cell.snr_db,
                    })
                    .collect(),
                n_tx: outcome.n_transmissions,
                bleu,
                similarity,
            })
        })
        .collect();
    let sessions = sessions?;

    let (series_label, x_label) = axis_labels(plan.kind);
    let mut rows = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let chunk = &sessions[c * per_cell..(c + 1) * per_cell];
        debug_assert!(chunk.iter().all(|r| r.cell == c));
        let bleu: Vec<f64> = chunk.iter().map(|r| r.bleu).collect();
        let sim: Vec<f64> = chunk.iter().map(|r| r.similarity).collect();
        let ntx: Vec<f64> = chunk.iter().map(|r| r.n_tx as f64).collect();
        let mut rb = derive_stream(plan.seed, "bootstrap", c as u64, 0);
        let (bleu_mean, bleu_ci) = bootstrap_ci(&bleu, &mut rb);
        let mut rs = derive_stream(plan.seed, "bootstrap", c as u64, 1);
        let (sim_mean, sim_ci) = bootstrap_ci(&sim, &mut rs);
        let mut rn = derive_stream(plan.seed, "bootstrap", c as u64, 2);
        let (ntx_mean, ntx_ci) = bootstrap_ci(&ntx, &mut rn);
        rows.push(SweepRow {
            series: cell.series.clone(),
            x: cell.x,
            bleu_mean,
            bleu_ci,
            sim_mean,
            sim_ci,
            ntx_mean,
            ntx_ci,
            n_sessions: chunk.len(),
        });
    }

    let dynamic_range = if plan.kind == SweepKind::QualityThresholdSweep {
        let mut out = Vec::new();
        for metric in &plan.metrics {
            let name = metric.name().to_string();
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.series == name)
                .map(|r| r.ntx_mean)
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.push(DynamicRange {
                metric: name,
                ntx_min: lo,
                ntx_max: hi,
                span: hi - lo,
            });
        }
        Some(out)
    } else {
        None
    };

    let meta = SweepMeta {
        format_version: 1,
        kind: plan.kind,
        scenario: plan.scenario,
        seed: plan.seed,
        split_seed: plan.split_seed,
        channel_seed: plan.channel_seed,
        series_label: series_label.to_string(),
        x_label: x_label.to_string(),
        n_sentences: plan.n_sentences,
        n_trials: plan.n_trials,
        p_z: power.p_z,
        p_z_samples: power.sample_size,
        bleu_order: 4,
        bleu_smoothing: true,
        similarity: "cosine of rx-codec posterior means (decoded vs reference)".to_string(),
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        confidence_level: 0.95,
        harq: plan.harq.clone(),
        snr_db_fixed: plan.snr_db,
        k_fixed: plan.k_fixed,
        synthetic_bias_scale: plan.synthetic_bias_scale,
        sentences,
        dynamic_range,
    };

    Ok(SweepOutput {
        result: SweepResult {
            kind: plan.kind,
            series_label: series_label.to_string(),
            x_label: x_label.to_string(),
            rows,
        },
        sessions,
        meta,
    })
}

/// Protocol wrappers with the axes spelled out.
pub fn run_ik_sweep(plan: &ExperimentPlan, codecs: &CodecPair) -> Result<SweepOutput, SweepError> {
    expect_kind(plan, SweepKind::IkSweep)?;
    run_sweep(plan, codecs)
}

pub fn run_combining_sweep(
    plan: &ExperimentPlan,
    codecs: &CodecPair,
) -> Result<SweepOutput, SweepError> {
    expect_kind(plan, SweepKind::CombiningSweep)?;
    run_sweep(plan, codecs)
}

pub fn run_quality_snr_sweep(
    plan: &ExperimentPlan,
    codecs: &CodecPair,
) -> Result<SweepOutput, SweepError> {
    expect_kind(plan, SweepKind::QualitySnrSweep)?;
    run_sweep(plan, codecs)
}

pub fn run_quality_threshold_sweep(
    plan: &ExperimentPlan,
    codecs: &CodecPair,
) -> Result<SweepOutput, SweepError> {
    expect_kind(plan, SweepKind::QualityThresholdSweep)?;
    run_sweep(plan, codecs)
}

fn expect_kind(plan: &ExperimentPlan, kind: SweepKind) -> Result<(), SweepError> {
    if plan.kind != kind {
        return Err(SweepError::InvalidPlan(format!(
            "plan kind is {:?}, expected {:?}",
            plan.kind, kind
        )));
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Renders the aggregate table as CSV (stable schema, deterministic bytes).
pub fn csv_string(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{},{},bleu_mean,bleu_ci,sim_mean,sim_ci,ntx_mean,ntx_ci,n_sessions\n",
        result.series_label, result.x_label
    ));
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.series,
            fmt_f64(r.x),
            fmt_f64(r.bleu_mean),
            fmt_f64(r.bleu_ci),
            fmt_f64(r.sim_mean),
            fmt_f64(r.sim_ci),
            fmt_f64(r.ntx_mean),
            fmt_f64(r.ntx_ci),
            r.n_sessions
        ));
    }
    out
}

/// One JSON object per session, axis values inlined under the sweep's own
/// column names.
pub fn jsonl_string(output: &SweepOutput) -> Result<String, SweepError> {
    let mut out = String::new();
    for rec in &output.sessions {
        let row = &output.result.rows[rec.cell];
        let mut map = serde_json::Map::new();
        map.insert("sentence_id".into(), rec.sentence_id.into());
        map.insert("trial".into(), rec.trial.into());
        map.insert("attempts".into(), serde_json::to_value(&rec.attempts)?);
        map.insert("n_tx".into(), rec.n_tx.into());
        map.insert("bleu".into(), rec.bleu.into());
        map.insert("similarity".into(), rec.similarity.into());
        map.insert(
            output.result.series_label.clone(),
            serde_json::Value::String(row.series.clone()),
        );
        let x_value = if output.result.x_label == "k" {
            serde_json::Value::from(row.x as u64)
        } else {
            serde_json::Value::from(row.x)
        };
        map.insert(output.result.x_label.clone(), x_value);
        out.push_str(&serde_json::to_string(&serde_json::Value::Object(map))?);
        out.push('\n');
    }
    Ok(out)
}

/// Chart of the sweep's headline statistic (BLEU for the combining-oriented
/// sweeps, mean transmissions for the quality sweeps).
pub fn chart_series(result: &SweepResult) -> Vec<ChartSeries> {
    let ntx = matches!(
        result.kind,
        SweepKind::QualitySnrSweep | SweepKind::QualityThresholdSweep
    );
    let mut names: Vec<&str> = Vec::new();
    for r in &result.rows {
        if !names.contains(&r.series.as_str()) {
            names.push(&r.series);
        }
    }
    names
        .iter()
        .map(|name| ChartSeries {
            name: (*name).to_string(),
            points: result
                .rows
                .iter()
                .filter(|r| r.series == **name)
                // non-finite axis values stay in the CSV but cannot be drawn
                .filter(|r| r.x.is_finite())
                .map(|r| {
                    if ntx {
                        (r.x, r.ntx_mean, r.ntx_ci)
                    } else {
                        (r.x, r.bleu_mean, r.bleu_ci)
                    }
                })
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

fn chart_spec(result: &SweepResult) -> ChartSpec {
    let (y_label, title) = match result.kind {
        SweepKind::IkSweep => ("BLEU-4", "Reconstruction vs retransmission budget"),
        SweepKind::CombiningSweep => ("BLEU-4", "Combiner quality across channel SNR"),
        SweepKind::QualitySnrSweep => ("mean transmissions", "Retransmission load across SNR"),
        SweepKind::QualityThresholdSweep => {
            ("mean transmissions", "Retransmission load across ACK threshold")
        }
    };
    ChartSpec {
        title: title.to_string(),
        x_label: result.x_label.clone(),
        y_label: y_label.to_string(),
        ..ChartSpec::default()
    }
}

/// Files produced by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct WrittenFiles {
    pub csv: PathBuf,
    pub jsonl: PathBuf,
    pub meta: PathBuf,
    pub chart: Option<PathBuf>,
}

/// Writes results.csv, sessions.jsonl, meta.json, and chart.svg into
/// `out_dir` (created if missing).
pub fn write_outputs(output: &SweepOutput, out_dir: &Path) -> Result<WrittenFiles, SweepError> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("results.csv");
    std::fs::write(&csv_path, csv_string(&output.result))?;

    let jsonl_path = out_dir.join("sessions.jsonl");
    let mut f = std::fs::File::create(&jsonl_path)?;
    f.write_all(jsonl_string(output)?.as_bytes())?;

    let meta_path = out_dir.join("meta.json");
    let mut meta_json = serde_json::to_string_pretty(&output.meta)?;
    meta_json.push('\n');
    std::fs::write(&meta_path, meta_json)?;

    let series = chart_series(&output.result);
    let chart_path = if series.is_empty() {
        None
    } else {
        let p = out_dir.join("chart.svg");
        chart::write_chart(&p, &series, &chart_spec(&output.result))?;
        Some(p)
    };

    Ok(WrittenFiles {
        csv: csv_path,
        jsonl: jsonl_path,
        meta: meta_path,
        chart: chart_path,
    })
}
