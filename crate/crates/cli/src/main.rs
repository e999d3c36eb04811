//! `semharq` — bench driver for the semantic HARQ test bench.
//!
//! Exit codes: 0 on success, 1 for usage/config problems, 2 for runtime
//! failures (missing checkpoints, IO, diverged training, ...).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semharq::channel::{BiasMode, Channel, ChannelConfig, LATENT_POWER_SAMPLES};
use semharq::codec::{
    load_checkpoint, save_checkpoint, train, LinearVae, SemanticCodec, TrainingConfig,
};
use semharq::combining::CombinerMethod;
use semharq::config::AppConfig;
use semharq::corpus::{self, DEFAULT_SPLIT_RATIOS};
use semharq::harq::{self, HarqConfig};
use semharq::quality::MetricTag;
use semharq::rng::derive_stream;
use semharq::sweep::{self, CodecPair, ExperimentPlan, Scenario, SweepKind};

#[derive(Parser)]
#[command(
    name = "semharq",
    version,
    about = "Semantic HARQ test bench: train the toy codec, run sweeps, inspect sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the linear VAE codec and write the checkpoint pair.
    Train(TrainArgs),
    /// BLEU vs retransmission budget, per combiner (forced sessions).
    IkSweep(SweepArgs),
    /// BLEU vs channel SNR at a fixed budget, per combiner.
    CombiningSweep(SweepArgs),
    /// Retransmission load vs channel SNR, per quality metric (adaptive).
    QualitySnrSweep(SweepArgs),
    /// Retransmission load vs ACK threshold at a fixed SNR, per metric.
    QualityThresholdSweep(SweepArgs),
    /// Run one HARQ session and print every attempt.
    Session(SessionArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file (TOML syntax, dotted keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all derived random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (falls back to $SEMHARQ_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cap on training epochs (overrides config).
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Transmit codec checkpoint (codec A).
    #[arg(long)]
    codec_a: PathBuf,
    /// Receive codec checkpoint for misaligned runs (codec B).
    #[arg(long)]
    codec_b: Option<PathBuf>,
    /// aligned | misaligned (default depends on the sweep).
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Number of test sentences.
    #[arg(long)]
    sentences: Option<usize>,
    /// Trials per sentence.
    #[arg(long)]
    trials: Option<usize>,
    /// Corpus split seed (keep equal to the training seed).
    #[arg(long)]
    split_seed: Option<u64>,
    /// Comma-separated K axis, e.g. 1,2,3,4,5 (ik sweep).
    #[arg(long, value_name = "LIST")]
    k_values: Option<String>,
    /// Comma-separated SNR axis in dB (combining / quality-snr sweeps).
    #[arg(long, value_name = "LIST")]
    snr_values: Option<String>,
    /// Fixed channel SNR in dB ("inf" for noiseless).
    #[arg(long, value_name = "DB")]
    snr_db: Option<String>,
    /// Comma-separated ACK thresholds (threshold sweep).
    #[arg(long, value_name = "LIST")]
    thresholds: Option<String>,
    /// Comma-separated metric tags A..F (quality sweeps).
    #[arg(long, value_name = "LIST")]
    metrics: Option<String>,
    /// Comma-separated combiners (ik / combining sweeps).
    #[arg(long, value_name = "LIST")]
    combiners: Option<String>,
    /// Retransmission budget for the combining sweep.
    #[arg(long)]
    k_fixed: Option<usize>,
    /// ACK threshold for the quality-snr sweep.
    #[arg(long)]
    q_th: Option<f64>,
    /// Synthetic channel bias scale (aligned scenario only).
    #[arg(long)]
    bias_scale: Option<f64>,
}

#[derive(Args)]
struct SessionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    codec_a: PathBuf,
    #[arg(long)]
    codec_b: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Sentence to transmit (defaults to a test-split sentence).
    #[arg(long)]
    text: Option<String>,
    /// Index into the test split when --text is not given.
    #[arg(long, default_value_t = 0)]
    sentence_id: usize,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    q_th: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_name = "DB")]
    snr_db: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    combiner: Option<String>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    // config problems are usage errors
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    };

    if let Err(e) = run(cli, cfg) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn common(cli: &Cli) -> &CommonArgs {
    match &cli.command {
        Command::Train(a) => &a.common,
        Command::IkSweep(a)
        | Command::CombiningSweep(a)
        | Command::QualitySnrSweep(a)
        | Command::QualityThresholdSweep(a) => &a.common,
        Command::Session(a) => &a.common,
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    match &common(cli).config {
        Some(path) => AppConfig::load(path)
            .with_context(|| format!("failed to load config {}", path.display())),
        None => Ok(AppConfig::default()),
    }
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("SEMHARQ_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli, cfg: AppConfig) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args, &cfg),
        Command::IkSweep(args) => cmd_sweep(SweepKind::IkSweep, args, &cfg),
        Command::CombiningSweep(args) => cmd_sweep(SweepKind::CombiningSweep, args, &cfg),
        Command::QualitySnrSweep(args) => cmd_sweep(SweepKind::QualitySnrSweep, args, &cfg),
        Command::QualityThresholdSweep(args) => {
            cmd_sweep(SweepKind::QualityThresholdSweep, args, &cfg)
        }
        Command::Session(args) => cmd_session(args, &cfg),
    }
}

fn cmd_train(args: TrainArgs, cfg: &AppConfig) -> Result<()> {
    let mut tc = cfg.training_config(&TrainingConfig::default());
    if let Some(seed) = args.common.seed {
        tc.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tc.epochs = epochs;
    }

    let sentences = corpus::bundled_corpus();
    let split_seed = cfg.sweep_split_seed.unwrap_or(tc.seed);
    let split = corpus::split_corpus(&sentences, DEFAULT_SPLIT_RATIOS, split_seed)?;
    println!(
        "training on {} sentences ({} validation, {} test), seed {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        tc.seed
    );

    let outcome = train(&split, &tc)?;

    let dir = out_dir(&args.common);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    let a_path = dir.join("codec-a.json");
    let b_path = dir.join("codec-b.json");
    save_checkpoint(&outcome.best, &a_path)?;
    save_checkpoint(&outcome.last, &b_path)?;

    let vae = outcome.best.clone().into_vae()?;
    let vocab_path = dir.join("vocab.json");
    vae.vocab().save_json(&vocab_path)?;

    let manifest_path = dir.join("train-manifest.json");
    let mut manifest = serde_json::to_string_pretty(&outcome.manifest)?;
    manifest.push('\n');
    std::fs::write(&manifest_path, manifest)?;

    println!(
        "best epoch {} (val BLEU-4 {:.4}); codec A = epoch {}, codec B = epoch {}",
        outcome.manifest.best_epoch,
        outcome.manifest.best_val_bleu4,
        outcome.best.epoch,
        outcome.last.epoch
    );
    println!("wrote {}", a_path.display());
    println!("wrote {}", b_path.display());
    println!("wrote {}", vocab_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn parse_list<T: FromStr>(name: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {name} entry {s:?}: {e}"))
        })
        .collect()
}

fn parse_snr(text: &str) -> Result<f64> {
    let t = text.trim().to_ascii_lowercase();
    if matches!(t.as_str(), "inf" | "+inf" | "infinity") {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|e| anyhow::anyhow!("bad SNR value {text:?}: {e}"))
}

fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_snr)
        .collect()
}

struct LoadedCodecs {
    a: LinearVae,
    b: Option<LinearVae>,
}

fn load_codecs(
    codec_a: &Path,
    codec_b: Option<&Path>,
    scenario: Scenario,
) -> Result<LoadedCodecs> {
    let a = load_checkpoint(codec_a)
        .with_context(|| format!("cannot load codec A from {}", codec_a.display()))?
        .into_vae()?;
    let b = match (codec_b, scenario) {
        (Some(path), _) => Some(
            load_checkpoint(path)
                .with_context(|| format!("cannot load codec B from {}", path.display()))?
                .into_vae()?,
        ),
        (None, Scenario::Misaligned) => {
            bail!("the misaligned scenario needs --codec-b")
        }
        (None, Scenario::Aligned) => None,
    };
    Ok(LoadedCodecs { a, b })
}

fn build_plan(kind: SweepKind, args: &SweepArgs, cfg: &AppConfig) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::new(kind);

    // config file first, then flags on top
    if let Some(v) = cfg.sweep_n_sentences {
        plan.n_sentences = v;
    }
    if let Some(v) = cfg.sweep_n_trials {
        plan.n_trials = v;
    }
    if let Some(v) = cfg.sweep_split_seed {
        plan.split_seed = v;
    }
    if let Some(v) = cfg.channel_snr_db {
        plan.snr_db = v;
    }
    if let Some(v) = cfg.channel_seed {
        plan.channel_seed = v;
    }
    plan.harq = cfg.harq_config(&plan.harq);

    if let Some(s) = args.scenario {
        plan.scenario = s;
    }
    if let Some(seed) = args.common.seed {
        plan.seed = seed;
    }
    if let Some(v) = args.sentences {
        plan.n_sentences = v;
    }
    if let Some(v) = args.trials {
        plan.n_trials = v;
    }
    if let Some(v) = args.split_seed {
        plan.split_seed = v;
    }
    if let Some(list) = &args.k_values {
        plan.k_values = parse_list("k", list)?;
    }
    if let Some(list) = &args.snr_values {
        plan.snr_values_db = parse_snr_list(list)?;
    }
    if let Some(v) = &args.snr_db {
        plan.snr_db = parse_snr(v)?;
    }
    if let Some(list) = &args.thresholds {
        plan.thresholds = parse_list("threshold", list)?;
    }
    if let Some(list) = &args.metrics {
        plan.metrics = parse_list::<MetricTag>("metric", list)?;
    }
    if let Some(list) = &args.combiners {
        plan.combiners = parse_list::<CombinerMethod>("combiner", list)?;
    }
    if let Some(v) = args.k_fixed {
        plan.k_fixed = v;
    }
    if let Some(v) = args.q_th {
        plan.harq.q_th = v;
    }
    if let Some(v) = args.bias_scale {
        plan.synthetic_bias_scale = Some(v);
    }
    Ok(plan)
}

fn cmd_sweep(kind: SweepKind, args: SweepArgs, cfg: &AppConfig) -> Result<()> {
    let plan = build_plan(kind, &args, cfg)?;
    let codecs = load_codecs(&args.codec_a, args.codec_b.as_deref(), plan.scenario)?;
    let pair = match &codecs.b {
        Some(b) => CodecPair {
            a: &codecs.a,
            b,
        },
        None => CodecPair::aligned(&codecs.a),
    };

    let output = sweep::run_sweep(&plan, &pair)?;
    let dir = out_dir(&args.common).join(kind.name());
    let files = sweep::write_outputs(&output, &dir)?;

    println!(
        "{}: {} cells, {} sessions under scenario {:?}",
        kind.name(),
        output.result.rows.len(),
        output.sessions.len(),
        plan.scenario
    );
    println!("wrote {}", files.csv.display());
    println!("wrote {}", files.jsonl.display());
    println!("wrote {}", files.meta.display());
    if let Some(chart) = files.chart {
        println!("wrote {}", chart.display());
    }
    Ok(())
}

fn cmd_session(args: SessionArgs, cfg: &AppConfig) -> Result<()> {
    let scenario = args.scenario.unwrap_or(Scenario::Aligned);
    let codecs = load_codecs(&args.codec_a, args.codec_b.as_deref(), scenario)?;
    let tx: &LinearVae = &codecs.a;
    let rx: &LinearVae = match (scenario, &codecs.b) {
        (Scenario::Misaligned, Some(b)) => b,
        _ => &codecs.a,
    };

    let mut harq_cfg = cfg.harq_config(&HarqConfig::default());
    if let Some(v) = args.q_th {
        harq_cfg.q_th = v;
    }
    if let Some(v) = args.k_max {
        harq_cfg.k_max = v;
    }
    if let Some(m) = &args.metric {
        harq_cfg.quality.metric = m
            .parse::<MetricTag>()
            .map_err(|e| anyhow::anyhow!("bad --metric: {e}"))?;
    }
    if let Some(c) = &args.combiner {
        harq_cfg.combiner.method = c
            .parse::<CombinerMethod>()
            .map_err(|e| anyhow::anyhow!("bad --combiner: {e}"))?;
    }

    let sentence = match &args.text {
        Some(t) => t.clone(),
        None => {
            let split_seed = args
                .split_seed
                .or(cfg.sweep_split_seed)
                .unwrap_or_default();
            let split =
                corpus::split_corpus(&corpus::bundled_corpus(), DEFAULT_SPLIT_RATIOS, split_seed)?;
            split
                .test
                .get(args.sentence_id)
                .cloned()
                .ok_or_else(|| {
                    anyhow::anyhow!(
                        "sentence_id {} out of range (test split has {})",
                        args.sentence_id,
                        split.test.len()
                    )
                })?
        }
    };

    let seed = args.common.seed.unwrap_or(0);
    let snr_db = match &args.snr_db {
        Some(v) => parse_snr(v)?,
        None => cfg.channel_snr_db.unwrap_or(0.0),
    };
    let bias_mode = match scenario {
        Scenario::Misaligned => BiasMode::MisalignedCodec,
        Scenario::Aligned => cfg
            .channel_config(&ChannelConfig {
                snr_db,
                bias_mode: BiasMode::None,
                seed: cfg.channel_seed.unwrap_or(seed),
            })
            .bias_mode,
    };

    let mut pz_rng = derive_stream(seed, "p-z", 0, 0);
    let power = semharq::channel::measure_latent_power(
        tx,
        &[sentence.clone()],
        LATENT_POWER_SAMPLES,
        &mut pz_rng,
    )?;
    let channel = Channel::new(
        ChannelConfig {
            snr_db,
            bias_mode,
            seed: cfg.channel_seed.unwrap_or(seed),
        },
        power.p_z,
    )?;

    let mut rng = derive_stream(seed, "session", args.sentence_id as u64, 0);
    let result = harq::run_session(&sentence, tx, rx, &channel, &harq_cfg, &mut rng)?;

    println!("sentence: {sentence:?}");
    println!(
        "scenario {:?}, SNR {} dB, metric {}, combiner {}, q_th {}, k_max {}",
        scenario,
        snr_db,
        harq_cfg.quality.metric,
        harq_cfg.combiner.method,
        harq_cfg.q_th,
        harq_cfg.k_max
    );
    for a in &result.attempts {
        let verdict = if a.quality.value >= harq_cfg.q_th {
            "ACK"
        } else {
            "NACK"
        };
        println!(
            "attempt {}: q_{} = {:.6} -> {}",
            a.k, harq_cfg.quality.metric, a.quality.value, verdict
        );
    }
    match result.ack_at {
        Some(k) => println!("acknowledged after {k} transmission(s)"),
        None => println!(
            "budget exhausted after {} transmission(s)",
            result.n_transmissions
        ),
    }
    println!("decoded: {:?}", result.decoded);
    Ok(())
}
