//! Command-line front end.
//!
//! Settings come from three layers; the first one that sets a value wins:
//!
//! 1. command-line flags
//! 2. `CAPTION_AUDIT_CACHE` (cache directory only)
//! 3. the JSON file given by `--config`
//! 4. built-in defaults
//!
//! Config-file keys are the flag names with `_` for `-`; the field names
//! `captions_path`, `instances_path`, `model_captions_path`,
//! `provider_sentiment`, `provider_embedding`, `score_cache_dir` and
//! `output_dir` are accepted as aliases.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::cache::ProviderCache;
use crate::error::{exit, Error, Result};
use crate::pipeline::{self, AuditInputs, AuditSettings, IngestOutput, ScoreStats, WorkDir};
use crate::report::{emit_report, HumanJoin};
use crate::semantics::{
    EmbeddingProvider, FileEmbeddings, HashEmbedder, SidecarEmbeddings, DEFAULT_HASH_DIM,
};
use crate::sentiment::{
    FileScores, LexiconProvider, SentimentProvider, SidecarSentiment, StrongThreshold,
};
use crate::sidecar::DEFAULT_TIMEOUT;
use crate::synth::{self, SynthConfig};

pub const CACHE_ENV: &str = "CAPTION_AUDIT_CACHE";

#[derive(Debug, Parser)]
#[command(
    name = "caption-audit",
    version,
    about = "Audit image-caption datasets for sentiment and semantic variability"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Join caption and instance annotations into the corpus file.
    Ingest,
    /// Score and embed every caption, filling the provider cache.
    Score,
    /// Compute the report set from ingested and scored files.
    Audit,
    /// Ingest, score and audit in one process without intermediate files.
    Run,
    /// Write a seeded synthetic corpus with planted category effects.
    Synth,
}

/// Every setting, unset unless given. Shared by flags and the config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Human caption annotations (COCO captions JSON).
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(alias = "captions_path")]
    pub captions: Option<PathBuf>,
    /// Object instance annotations (COCO instances JSON).
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(alias = "instances_path")]
    pub instances: Option<PathBuf>,
    /// Model-generated captions to compare against the human ones.
    #[arg(long, global = true, value_name = "PATH")]
    #[serde(alias = "model_captions_path")]
    pub model_captions: Option<PathBuf>,
    /// lexicon | file:<path> | sidecar:<addr>
    #[arg(long, global = true, value_name = "SPEC")]
    #[serde(alias = "provider_sentiment")]
    pub sentiment_provider: Option<String>,
    /// Provider for model captions; defaults to --sentiment-provider.
    #[arg(long, global = true, value_name = "SPEC")]
    pub model_sentiment_provider: Option<String>,
    /// hash | file:<path> | sidecar:<addr>
    #[arg(long, global = true, value_name = "SPEC")]
    #[serde(alias = "provider_embedding")]
    pub embedding_provider: Option<String>,
    /// Dimension of the hash embedding.
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    /// Provider cache directory [default: <out>/cache].
    #[arg(long, global = true, value_name = "DIR")]
    #[serde(alias = "score_cache_dir")]
    pub cache_dir: Option<PathBuf>,
    /// Seconds to wait for one sidecar batch.
    #[arg(long, global = true, value_name = "SECS")]
    pub sidecar_timeout: Option<f64>,
    /// Scores strictly above this magnitude are strong [default: 0.5].
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Significance level for coefficient flags [default: 0.01].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Sentiment histogram bins [default: 40].
    #[arg(long, global = true)]
    pub bins_sentiment: Option<usize>,
    /// Variability histogram bins [default: 50].
    #[arg(long, global = true)]
    pub bins_variability: Option<usize>,
    /// mean | max_abs
    #[arg(long, global = true)]
    pub human_join: Option<HumanJoin>,
    /// Work and output directory.
    #[arg(long, global = true, value_name = "DIR")]
    #[serde(alias = "output_dir")]
    pub out: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for synthetic data [default: 1].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Captions in a synthetic corpus [default: 5000].
    #[arg(long, global = true)]
    pub synth_captions: Option<usize>,
    /// Categories in a synthetic corpus [default: 20].
    #[arg(long, global = true)]
    pub synth_categories: Option<usize>,
    /// Comma-separated planted coefficients, one per category.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub planted: Option<Vec<f64>>,
    /// Plant no effects at all.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub null_effects: Option<bool>,
}

impl Options {
    /// Fills every unset field from `lower`.
    pub fn or(self, lower: Options) -> Options {
        Options {
            captions: self.captions.or(lower.captions),
            instances: self.instances.or(lower.instances),
            model_captions: self.model_captions.or(lower.model_captions),
            sentiment_provider: self.sentiment_provider.or(lower.sentiment_provider),
            model_sentiment_provider: self
                .model_sentiment_provider
                .or(lower.model_sentiment_provider),
            embedding_provider: self.embedding_provider.or(lower.embedding_provider),
            embedding_dim: self.embedding_dim.or(lower.embedding_dim),
            cache_dir: self.cache_dir.or(lower.cache_dir),
            sidecar_timeout: self.sidecar_timeout.or(lower.sidecar_timeout),
            threshold: self.threshold.or(lower.threshold),
            alpha: self.alpha.or(lower.alpha),
            bins_sentiment: self.bins_sentiment.or(lower.bins_sentiment),
            bins_variability: self.bins_variability.or(lower.bins_variability),
            human_join: self.human_join.or(lower.human_join),
            out: self.out.or(lower.out),
            jobs: self.jobs.or(lower.jobs),
            seed: self.seed.or(lower.seed),
            synth_captions: self.synth_captions.or(lower.synth_captions),
            synth_categories: self.synth_categories.or(lower.synth_categories),
            planted: self.planted.or(lower.planted),
            null_effects: self.null_effects.or(lower.null_effects),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SentimentSpec {
    Lexicon,
    File(PathBuf),
    Sidecar(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSpec {
    Hash,
    File(PathBuf),
    Sidecar(String),
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((k, rest)) => (k, Some(rest)),
        None => (spec, None),
    }
}

impl std::str::FromStr for SentimentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_spec(s) {
            ("lexicon", None) => Ok(SentimentSpec::Lexicon),
            ("file", Some(p)) if !p.is_empty() => Ok(SentimentSpec::File(p.into())),
            ("sidecar", Some(a)) if !a.is_empty() => Ok(SentimentSpec::Sidecar(a.into())),
            _ => Err(Error::Usage(format!(
                "bad sentiment provider `{s}` (expected lexicon, file:<path> or sidecar:<addr>)"
            ))),
        }
    }
}

impl std::str::FromStr for EmbeddingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_spec(s) {
            ("hash", None) => Ok(EmbeddingSpec::Hash),
            ("file", Some(p)) if !p.is_empty() => Ok(EmbeddingSpec::File(p.into())),
            ("sidecar", Some(a)) if !a.is_empty() => Ok(EmbeddingSpec::Sidecar(a.into())),
            _ => Err(Error::Usage(format!(
                "bad embedding provider `{s}` (expected hash, file:<path> or sidecar:<addr>)"
            ))),
        }
    }
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub captions_path: Option<PathBuf>,
    pub instances_path: Option<PathBuf>,
    pub model_captions_path: Option<PathBuf>,
    pub provider_sentiment: SentimentSpec,
    pub provider_model_sentiment: SentimentSpec,
    pub provider_embedding: EmbeddingSpec,
    pub embedding_dim: usize,
    pub score_cache_dir: PathBuf,
    pub sidecar_timeout: Duration,
    pub settings: AuditSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub synth: SynthConfig,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn nonzero(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(usage(format!("--{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

impl RunConfig {
    /// Resolves layered options. `env_cache` is the value of
    /// `CAPTION_AUDIT_CACHE`, passed in so tests need not touch the
    /// process environment.
    pub fn resolve(flags: Options, file: Options, env_cache: Option<PathBuf>) -> Result<Self> {
        let cache_flag = flags.cache_dir.clone();
        let o = flags.or(file);
        let output_dir = o.out.clone().ok_or_else(|| usage("--out is required"))?;
        if output_dir.as_os_str().is_empty() {
            return Err(usage("--out must not be empty"));
        }
        let score_cache_dir = cache_flag
            .or(env_cache.filter(|p| !p.as_os_str().is_empty()))
            .or(o.cache_dir)
            .unwrap_or_else(|| output_dir.join("cache"));

        let threshold = o.threshold.unwrap_or(0.5);
        let threshold = StrongThreshold::new(threshold).map_err(|_| {
            usage(format!(
                "--threshold must lie strictly between 0 and 1, got {threshold}"
            ))
        })?;
        let alpha = o.alpha.unwrap_or(crate::regression::DEFAULT_ALPHA);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(usage(format!(
                "--alpha must lie strictly between 0 and 1, got {alpha}"
            )));
        }
        let jobs = match o.jobs {
            Some(j) => nonzero("jobs", j)?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let timeout = match o.sidecar_timeout {
            Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
            Some(s) => {
                return Err(usage(format!(
                    "--sidecar-timeout must be positive, got {s}"
                )))
            }
            None => DEFAULT_TIMEOUT,
        };
        let provider_sentiment: SentimentSpec = o
            .sentiment_provider
            .as_deref()
            .unwrap_or("lexicon")
            .parse()?;
        let provider_model_sentiment = match o.model_sentiment_provider.as_deref() {
            Some(s) => s.parse()?,
            None => provider_sentiment.clone(),
        };
        let seed = o.seed.unwrap_or(1);
        let defaults = SynthConfig::default();
        Ok(RunConfig {
            captions_path: o.captions,
            instances_path: o.instances,
            model_captions_path: o.model_captions,
            provider_sentiment,
            provider_model_sentiment,
            provider_embedding: o.embedding_provider.as_deref().unwrap_or("hash").parse()?,
            embedding_dim: nonzero("embedding-dim", o.embedding_dim.unwrap_or(DEFAULT_HASH_DIM))?,
            score_cache_dir,
            sidecar_timeout: timeout,
            settings: AuditSettings {
                threshold,
                alpha,
                bins_sentiment: nonzero(
                    "bins-sentiment",
                    o.bins_sentiment
                        .unwrap_or(crate::report::DEFAULT_SENTIMENT_BINS),
                )?,
                bins_variability: nonzero(
                    "bins-variability",
                    o.bins_variability
                        .unwrap_or(crate::report::DEFAULT_VARIABILITY_BINS),
                )?,
                human_join: o.human_join.unwrap_or_default(),
                jobs,
            },
            output_dir,
            seed,
            synth: SynthConfig {
                seed,
                captions: o.synth_captions.unwrap_or(defaults.captions),
                categories: o.synth_categories.unwrap_or(defaults.categories),
                planted: o.planted,
                null_effects: o.null_effects.unwrap_or(false),
                ..defaults
            },
        })
    }

    pub fn work_dir(&self) -> WorkDir {
        WorkDir::new(&self.output_dir)
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        match path {
            Some(p) if !p.as_os_str().is_empty() => Ok(p),
            _ => Err(usage(format!("--{flag} is required"))),
        }
    }

    pub fn sentiment_provider(&self, spec: &SentimentSpec) -> Result<Box<dyn SentimentProvider>> {
        Ok(match spec {
            SentimentSpec::Lexicon => Box::new(LexiconProvider),
            SentimentSpec::File(p) => Box::new(FileScores::open(p)?),
            SentimentSpec::Sidecar(a) => Box::new(SidecarSentiment::new(a, self.sidecar_timeout)),
        })
    }

    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match &self.provider_embedding {
            EmbeddingSpec::Hash => Box::new(HashEmbedder::new(self.embedding_dim)),
            EmbeddingSpec::File(p) => Box::new(FileEmbeddings::open(p)?),
            EmbeddingSpec::Sidecar(a) => Box::new(SidecarEmbeddings::new(a, self.sidecar_timeout)),
        })
    }
}

fn log_ingest(out: &IngestOutput) {
    let d = &out.diagnostics;
    log::info!(
        "ingested {} images, {} captions, {} categories; dropped {} images without captions; {} images without categories",
        d.images,
        d.captions,
        d.categories,
        d.dropped_images_without_captions,
        d.zero_category_images.len()
    );
    if let Some((_, m)) = &out.model {
        log::info!(
            "model captions: {} images, {} captions",
            m.images,
            m.captions
        );
    }
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestOutput> {
    let out = pipeline::ingest(
        cfg.require(&cfg.captions_path, "captions")?,
        cfg.require(&cfg.instances_path, "instances")?,
        cfg.model_captions_path.as_deref(),
    )?;
    log_ingest(&out);
    pipeline::write_ingest(&out, &cfg.work_dir())?;
    Ok(out)
}

fn score_in_memory(
    cfg: &RunConfig,
    human: &crate::corpus::Corpus,
    model: Option<&crate::corpus::Corpus>,
) -> Result<(pipeline::Scored, ScoreStats)> {
    let sentiment = cfg.sentiment_provider(&cfg.provider_sentiment)?;
    let model_sentiment = match model {
        Some(_) if cfg.provider_model_sentiment != cfg.provider_sentiment => {
            cfg.sentiment_provider(&cfg.provider_model_sentiment)?
        }
        _ => cfg.sentiment_provider(&cfg.provider_sentiment)?,
    };
    let embedder = cfg.embedding_provider()?;
    let cache = ProviderCache::new(&cfg.score_cache_dir);
    let (scored, stats) = pipeline::score(
        human,
        model,
        sentiment.as_ref(),
        model_sentiment.as_ref(),
        embedder.as_ref(),
        Some(&cache),
        cfg.settings.jobs,
    )?;
    log::info!(
        "sentiment: {} cached, {} computed in {} provider calls",
        stats.human.cached,
        stats.human.computed,
        stats.human.provider_calls
    );
    if let Some(m) = stats.model {
        log::info!(
            "model sentiment: {} cached, {} computed in {} provider calls",
            m.cached,
            m.computed,
            m.provider_calls
        );
    }
    log::info!(
        "embeddings: {} cached, {} computed in {} provider calls",
        stats.embeddings.cached,
        stats.embeddings.computed,
        stats.embeddings.provider_calls
    );
    Ok((scored, stats))
}

pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreStats> {
    let dir = cfg.work_dir();
    let (human, model) = pipeline::load_corpora(&dir)?;
    let (scored, stats) = score_in_memory(cfg, &human, model.as_ref())?;
    pipeline::write_scored(&scored, &dir)?;
    Ok(stats)
}

pub fn cmd_audit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.work_dir();
    let (human, model) = pipeline::load_corpora(&dir)?;
    let scored = pipeline::load_scored(&dir, &human, model.as_ref())?;
    audit_and_emit(cfg, &human, model.as_ref(), &scored)
}

fn audit_and_emit(
    cfg: &RunConfig,
    human: &crate::corpus::Corpus,
    model: Option<&crate::corpus::Corpus>,
    scored: &pipeline::Scored,
) -> Result<Vec<PathBuf>> {
    let inputs = AuditInputs {
        corpus: human,
        model,
        scored,
    };
    let (report, rows) = pipeline::audit(&inputs, &cfg.settings)?;
    let files = emit_report(&report, &rows, &cfg.output_dir)?;
    log::info!(
        "wrote {} report files to {}",
        files.len(),
        cfg.output_dir.display()
    );
    Ok(files)
}

pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = pipeline::ingest(
        cfg.require(&cfg.captions_path, "captions")?,
        cfg.require(&cfg.instances_path, "instances")?,
        cfg.model_captions_path.as_deref(),
    )?;
    log_ingest(&out);
    let model = out.model.as_ref().map(|(c, _)| c);
    let (scored, _) = score_in_memory(cfg, &out.corpus, model)?;
    audit_and_emit(cfg, &out.corpus, model, &scored)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let corpus = synth::generate(&cfg.synth)?;
    let files = synth::write_synth(&corpus, &cfg.output_dir)?;
    log::info!(
        "wrote {} synthetic captions over {} categories to {}",
        corpus.scores.len(),
        cfg.synth.categories,
        cfg.output_dir.display()
    );
    Ok(files)
}

fn read_config(path: &Path) -> Result<Options> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

pub fn execute(cli: Cli, env_cache: Option<PathBuf>) -> Result<()> {
    let file = match &cli.config {
        Some(p) => read_config(p)?,
        None => Options::default(),
    };
    let cfg = RunConfig::resolve(cli.options, file, env_cache)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg).map(drop),
        Command::Score => cmd_score(&cfg).map(drop),
        Command::Audit => cmd_audit(&cfg).map(drop),
        Command::Run => cmd_run(&cfg).map(drop),
        Command::Synth => cmd_synth(&cfg).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return code;
        }
    };
    let env_cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    match execute(cli, env_cache) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
