//! The audit stages and the file layout they hand off through.
//!
//! A work directory holds every intermediate file:
//!
//! | file                     | written by | content                        |
//! |--------------------------|------------|--------------------------------|
//! | `corpus.ndjson`          | ingest     | human-caption corpus           |
//! | `corpus_model.ndjson`    | ingest     | model-caption corpus, optional |
//! | `diagnostics.json`       | ingest     | drop counts and distributions  |
//! | `scores_human.ndjson`    | score      | score-NDJSON                   |
//! | `scores_model.ndjson`    | score      | score-NDJSON, optional         |
//! | `embeddings_human.ndjson`| score      | embedding-NDJSON               |
//! | `report.json`, `*.csv`   | audit      | the report set                 |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cache::{ProviderCache, ScoringStats};
use crate::corpus::{
    build_corpus, parse_captions_with_source, parse_instances, read_corpus, write_corpus,
    CaptionSource, Corpus, IngestDiagnostics,
};
use crate::error::{Error, Result};
use crate::regression::{build_design, ols_fit, pearson_r, significance_table, Subset};
use crate::report::{
    compare_human_model, histogram, per_image_moments, strong_breakdown, AuditReport,
    CorpusSummary, Correlations, Histograms, HumanJoin, Moments, PerImageRow, Provenance,
    RegressionSummary, Regressions, StrongCountBreakdown, StrongSummary, VariabilitySummary,
};
use crate::semantics::{
    embed_corpus, load_embeddings, variability_by_image, write_embeddings, EmbeddingProvider,
    EmbeddingVector, SemanticsError,
};
use crate::sentiment::{
    is_strong, load_scores, score_corpus, write_scores, SentimentError, SentimentProvider,
    SentimentRecord, StrongThreshold,
};

pub const CORPUS_FILE: &str = "corpus.ndjson";
pub const MODEL_CORPUS_FILE: &str = "corpus_model.ndjson";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SCORES_FILE: &str = "scores_human.ndjson";
pub const MODEL_SCORES_FILE: &str = "scores_model.ndjson";
pub const EMBEDDINGS_FILE: &str = "embeddings_human.ndjson";

/// Paths of the intermediate files inside a work directory.
#[derive(Debug, Clone)]
pub struct WorkDir(PathBuf);

impl WorkDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self(dir.into())
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn create(&self) -> Result<()> {
        std::fs::create_dir_all(&self.0).map_err(|e| Error::io(&self.0, e))
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub corpus: Corpus,
    pub diagnostics: IngestDiagnostics,
    pub model: Option<(Corpus, IngestDiagnostics)>,
}

#[derive(Debug, Serialize)]
struct DiagnosticsFile<'a> {
    human: &'a IngestDiagnostics,
    model: Option<&'a IngestDiagnostics>,
}

/// Parses and joins the annotation files. Model captions share the human
/// corpus's category table and presence map.
pub fn ingest(
    captions: &Path,
    instances: &Path,
    model_captions: Option<&Path>,
) -> Result<IngestOutput> {
    let (cap_records, inst) = std::thread::scope(|s| {
        let caps = s.spawn(|| parse_captions_with_source(captions, CaptionSource::Human));
        let inst = parse_instances(instances);
        (caps.join().expect("caption parser panicked"), inst)
    });
    let (table, presence) = inst?;
    let model = match model_captions {
        Some(p) => {
            let recs = parse_captions_with_source(p, CaptionSource::Model)?;
            Some(build_corpus(recs, table.clone(), &presence))
        }
        None => None,
    };
    let (corpus, diagnostics) = build_corpus(cap_records?, table, &presence);
    Ok(IngestOutput {
        corpus,
        diagnostics,
        model,
    })
}

pub fn corpus_bytes(corpus: &Corpus) -> Vec<u8> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf).expect("in-memory write");
    buf
}

pub fn corpus_sha256(corpus: &Corpus) -> String {
    hex::encode(Sha256::digest(corpus_bytes(corpus)))
}

pub fn write_ingest(out: &IngestOutput, dir: &WorkDir) -> Result<()> {
    dir.create()?;
    let put = |name: &str, bytes: &[u8]| {
        let p = dir.file(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    put(CORPUS_FILE, &corpus_bytes(&out.corpus))?;
    match &out.model {
        Some((m, _)) => put(MODEL_CORPUS_FILE, &corpus_bytes(m))?,
        None => {
            let p = dir.file(MODEL_CORPUS_FILE);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(p, e))?;
            }
        }
    }
    let diag = DiagnosticsFile {
        human: &out.diagnostics,
        model: out.model.as_ref().map(|(_, d)| d),
    };
    let mut json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize");
    json.push('\n');
    put(DIAGNOSTICS_FILE, json.as_bytes())
}

pub fn read_corpus_file(path: &Path) -> Result<Corpus> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_corpus(BufReader::new(f))?)
}

/// The human corpus and, if present, the model corpus of a work directory.
pub fn load_corpora(dir: &WorkDir) -> Result<(Corpus, Option<Corpus>)> {
    let human = read_corpus_file(&dir.file(CORPUS_FILE))?;
    let model_path = dir.file(MODEL_CORPUS_FILE);
    let model = if model_path.exists() {
        Some(read_corpus_file(&model_path)?)
    } else {
        None
    };
    Ok((human, model))
}

/// Provider outputs for one audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub human_scores: BTreeMap<i64, SentimentRecord>,
    pub model_scores: Option<BTreeMap<i64, SentimentRecord>>,
    pub embeddings: BTreeMap<i64, Vec<EmbeddingVector>>,
    pub embedding_provider: String,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ScoreStats {
    pub human: ScoringStats,
    pub model: Option<ScoringStats>,
    pub embeddings: ScoringStats,
}

pub fn score(
    human: &Corpus,
    model: Option<&Corpus>,
    sentiment: &dyn SentimentProvider,
    model_sentiment: &dyn SentimentProvider,
    embedder: &dyn EmbeddingProvider,
    cache: Option<&ProviderCache>,
    jobs: usize,
) -> Result<(Scored, ScoreStats)> {
    let (human_scores, human_stats) = score_corpus(human, sentiment, cache, jobs)?;
    let (model_scores, model_stats) = match model {
        Some(m) => {
            let (s, st) = score_corpus(m, model_sentiment, cache, jobs)?;
            (Some(s), Some(st))
        }
        None => (None, None),
    };
    let (embeddings, emb_stats) = embed_corpus(human, embedder, cache, jobs)?;
    Ok((
        Scored {
            human_scores,
            model_scores,
            embeddings,
            embedding_provider: embedder.label(),
        },
        ScoreStats {
            human: human_stats,
            model: model_stats,
            embeddings: emb_stats,
        },
    ))
}

pub fn write_scored(scored: &Scored, dir: &WorkDir) -> Result<()> {
    dir.create()?;
    write_scores(&dir.file(SCORES_FILE), scored.human_scores.values())?;
    match &scored.model_scores {
        Some(m) => write_scores(&dir.file(MODEL_SCORES_FILE), m.values())?,
        None => {
            let p = dir.file(MODEL_SCORES_FILE);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(p, e))?;
            }
        }
    }
    let flat = scored.embeddings.values().flatten();
    write_embeddings(&dir.file(EMBEDDINGS_FILE), flat, &scored.embedding_provider)?;
    Ok(())
}

fn restrict_scores(
    corpus: &Corpus,
    records: Vec<SentimentRecord>,
) -> Result<BTreeMap<i64, SentimentRecord>> {
    let mut all: BTreeMap<i64, SentimentRecord> =
        records.into_iter().map(|r| (r.caption_id, r)).collect();
    all.retain(|id, _| corpus.caption(*id).is_some());
    let missing: Vec<i64> = corpus
        .captions()
        .map(|c| c.caption_id)
        .filter(|id| !all.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(SentimentError::MissingScore(missing).into());
    }
    Ok(all)
}

/// Reads the score and embedding files of a work directory back into the
/// shape `score` produces.
pub fn load_scored(dir: &WorkDir, human: &Corpus, model: Option<&Corpus>) -> Result<Scored> {
    let human_scores = restrict_scores(human, load_scores(&dir.file(SCORES_FILE))?)?;
    let model_scores = match model {
        Some(m) => Some(restrict_scores(
            m,
            load_scores(&dir.file(MODEL_SCORES_FILE))?,
        )?),
        None => None,
    };
    let loaded = load_embeddings(&dir.file(EMBEDDINGS_FILE))?;
    let mut labels: Vec<String> = loaded.iter().filter_map(|(_, p)| p.clone()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut by_caption: BTreeMap<i64, EmbeddingVector> =
        loaded.into_iter().map(|(v, _)| (v.caption_id, v)).collect();
    let mut embeddings = BTreeMap::new();
    let mut missing = Vec::new();
    for img in human.images() {
        let vecs: Vec<EmbeddingVector> = img
            .caption_ids
            .iter()
            .filter_map(|id| {
                let v = by_caption.remove(id);
                if v.is_none() {
                    missing.push(*id);
                }
                v
            })
            .collect();
        embeddings.insert(img.image_id, vecs);
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(SemanticsError::MissingEmbedding(missing).into());
    }
    Ok(Scored {
        human_scores,
        model_scores,
        embeddings,
        embedding_provider: labels.join("+"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub threshold: StrongThreshold,
    pub alpha: f64,
    pub bins_sentiment: usize,
    pub bins_variability: usize,
    pub human_join: HumanJoin,
    pub jobs: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            threshold: StrongThreshold::default(),
            alpha: crate::regression::DEFAULT_ALPHA,
            bins_sentiment: crate::report::DEFAULT_SENTIMENT_BINS,
            bins_variability: crate::report::DEFAULT_VARIABILITY_BINS,
            human_join: HumanJoin::Mean,
            jobs: 1,
        }
    }
}

fn provider_labels(scores: &BTreeMap<i64, SentimentRecord>) -> String {
    let mut labels: Vec<&str> = scores.values().map(|r| r.provider.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels.join("+")
}

fn regression_summary(
    corpus: &Corpus,
    scores: &BTreeMap<i64, SentimentRecord>,
    subset: Subset,
    settings: &AuditSettings,
) -> RegressionSummary {
    let (x, y) = match build_design(corpus, scores, subset, settings.threshold) {
        Ok(d) => d,
        Err(e) => {
            return RegressionSummary {
                n_obs: 0,
                fit: None,
                significance: Vec::new(),
                skipped: Some(e.to_string()),
            }
        }
    };
    match ols_fit(&x, &y) {
        Ok(fit) => RegressionSummary {
            n_obs: y.len(),
            significance: significance_table(&fit, settings.alpha),
            fit: Some(fit),
            skipped: None,
        },
        Err(e) => RegressionSummary {
            n_obs: y.len(),
            fit: None,
            significance: Vec::new(),
            skipped: Some(e.to_string()),
        },
    }
}

fn strong_fraction(b: &StrongCountBreakdown, corpus: &Corpus) -> f64 {
    if corpus.caption_count() == 0 {
        0.0
    } else {
        b.captions_strong as f64 / corpus.caption_count() as f64
    }
}

/// Everything the audit needs besides the settings.
pub struct AuditInputs<'a> {
    pub corpus: &'a Corpus,
    pub model: Option<&'a Corpus>,
    pub scored: &'a Scored,
}

/// Computes the full report and the per-image table.
pub fn audit(
    inputs: &AuditInputs<'_>,
    settings: &AuditSettings,
) -> Result<(AuditReport, Vec<PerImageRow>)> {
    let corpus = inputs.corpus;
    let scored = inputs.scored;
    let th = settings.threshold;
    let human_values: Vec<f64> = scored.human_scores.values().map(|r| r.score).collect();

    let model = match (inputs.model, &scored.model_scores) {
        (Some(c), Some(s)) => Some((c, s)),
        (None, _) => None,
        (Some(_), None) => {
            return Err(Error::Usage(
                "model corpus given without model scores".into(),
            ));
        }
    };
    let model_values: Option<Vec<f64>> = model.map(|(_, s)| s.values().map(|r| r.score).collect());

    let (variability, single) = variability_by_image(&scored.embeddings, settings.jobs)?;
    let s_values: Vec<f64> = variability.iter().map(|v| v.s).collect();
    let s_by_image: BTreeMap<i64, f64> = variability.iter().map(|v| (v.image_id, v.s)).collect();

    let human_strong = strong_breakdown(&scored.human_scores, corpus, th)?;
    let model_strong = match model {
        Some((c, s)) => Some(strong_breakdown(s, c, th)?),
        None => None,
    };

    let moments = per_image_moments(&scored.human_scores, corpus)?;
    let var_pairs: (Vec<f64>, Vec<f64>) = moments
        .iter()
        .filter_map(|m| s_by_image.get(&m.image_id).map(|s| (*s, m.mean_score)))
        .unzip();
    let variability_vs_sentiment = pearson_r(&var_pairs.0, &var_pairs.1).ok();

    let (comparison, comparison_skipped) = match model {
        Some((mc, ms)) => match compare_human_model(
            &scored.human_scores,
            ms,
            corpus,
            mc,
            th,
            settings.human_join,
        ) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, None),
    };

    let per_image = moments
        .iter()
        .map(|m| {
            let img = corpus.image(m.image_id).expect("moment image exists");
            PerImageRow {
                image_id: m.image_id,
                n_captions: m.n,
                mean_score: m.mean_score,
                sd_score: m.sd_score,
                strong_captions: img
                    .caption_ids
                    .iter()
                    .filter(|id| is_strong(scored.human_scores[id].score, th))
                    .count(),
                variability: s_by_image.get(&m.image_id).copied(),
            }
        })
        .collect();

    let mut captions_per_image = BTreeMap::new();
    for img in corpus.images() {
        *captions_per_image.entry(img.caption_ids.len()).or_insert(0) += 1;
    }

    let report = AuditReport {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            sentiment_provider: provider_labels(&scored.human_scores),
            model_sentiment_provider: model.map(|(_, s)| provider_labels(s)),
            embedding_provider: scored.embedding_provider.clone(),
            strong_threshold: th.value(),
            alpha: settings.alpha,
            bins_sentiment: settings.bins_sentiment,
            bins_variability: settings.bins_variability,
            human_join: settings.human_join,
            corpus_sha256: corpus_sha256(corpus),
            model_corpus_sha256: model.map(|(c, _)| corpus_sha256(c)),
        },
        corpus: CorpusSummary {
            images: corpus.image_count(),
            captions: corpus.caption_count(),
            categories: corpus.categories().len(),
            captions_per_image,
            model_images: model.map(|(c, _)| c.image_count()),
            model_captions: model.map(|(c, _)| c.caption_count()),
        },
        sentiment_human: Moments::of(&human_values),
        sentiment_model: model_values.as_deref().map(Moments::of),
        variability: VariabilitySummary {
            moments: Moments::of(&s_values),
            single_caption_images: single.len(),
        },
        histograms: Histograms {
            sentiment_human: histogram(&human_values, -1.0, 1.0, settings.bins_sentiment)?,
            sentiment_model: model_values
                .as_deref()
                .map(|v| histogram(v, -1.0, 1.0, settings.bins_sentiment))
                .transpose()?,
            variability: histogram(&s_values, 0.0, 1.0, settings.bins_variability)?,
        },
        strong: StrongSummary {
            human_fraction: strong_fraction(&human_strong, corpus),
            human: human_strong,
            model_fraction: model
                .zip(model_strong.as_ref())
                .map(|((c, _), b)| strong_fraction(b, c)),
            model: model_strong,
        },
        regressions: Regressions {
            all: regression_summary(corpus, &scored.human_scores, Subset::All, settings),
            strong_human: regression_summary(
                corpus,
                &scored.human_scores,
                Subset::StrongOnly,
                settings,
            ),
            strong_model: model
                .map(|(c, s)| regression_summary(c, s, Subset::StrongOnly, settings)),
        },
        correlations: Correlations {
            variability_vs_sentiment,
            human_vs_model: comparison.as_ref().and_then(|c| c.pearson_r),
        },
        comparison,
        comparison_skipped,
    };
    Ok((report, per_image))
}
