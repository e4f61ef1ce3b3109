//! Sentiment providers, the on-disk score cache and corpus-wide scoring.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    lexicon_score, load_scores, write_scores, ConfidenceTriple, ScoreLine, SentimentError,
    SentimentRecord, LEXICON_VERSION,
};
use crate::cache::{ProviderCache, ScoringStats};
use crate::corpus::{CaptionRecord, Corpus};
use crate::parallel::with_jobs;
use crate::sidecar::SidecarClient;

const BATCH_SIZE: usize = 64;

/// A source of confidence triples. Implementations that cannot be called
/// from several threads at once return `false` from `concurrent`.
pub trait SentimentProvider: Send + Sync {
    fn id(&self) -> &str;
    fn version(&self) -> &str;

    /// Provenance string written next to every score.
    fn label(&self) -> String {
        format!("{}@{}", self.id(), self.version())
    }

    fn concurrent(&self) -> bool {
        true
    }

    /// Returns one triple per caption, in input order.
    fn score_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<ConfidenceTriple>, SentimentError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LexiconProvider;

impl SentimentProvider for LexiconProvider {
    fn id(&self) -> &str {
        "lexicon"
    }

    fn version(&self) -> &str {
        LEXICON_VERSION
    }

    fn score_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<ConfidenceTriple>, SentimentError> {
        Ok(batch.iter().map(|c| lexicon_score(&c.text)).collect())
    }
}

/// Precomputed triples from a score-NDJSON file, looked up by caption id.
pub struct FileScores {
    triples: BTreeMap<i64, ConfidenceTriple>,
    id: String,
    version: String,
    label: Option<String>,
}

impl FileScores {
    pub fn open(path: &Path) -> Result<Self, SentimentError> {
        let bytes = std::fs::read(path).map_err(|source| SentimentError::Cache {
            path: path.to_path_buf(),
            source,
        })?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let records = load_scores(path)?;
        let mut labels: Vec<&str> = records.iter().map(|r| r.provider.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        let label = match labels.as_slice() {
            [single] if *single != "file" => Some(single.to_string()),
            _ => None,
        };
        Ok(Self {
            triples: records.iter().map(|r| (r.caption_id, r.triple)).collect(),
            id: "file".into(),
            version: digest[..12].to_owned(),
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

impl SentimentProvider for FileScores {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}@{}", self.id, self.version))
    }

    fn score_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<ConfidenceTriple>, SentimentError> {
        let missing: Vec<i64> = batch
            .iter()
            .filter(|c| !self.triples.contains_key(&c.caption_id))
            .map(|c| c.caption_id)
            .collect();
        if !missing.is_empty() {
            return Err(SentimentError::MissingScore(missing));
        }
        Ok(batch.iter().map(|c| self.triples[&c.caption_id]).collect())
    }
}

/// Streams captions to an external sentiment model. Serial.
pub struct SidecarSentiment {
    client: SidecarClient,
}

impl SidecarSentiment {
    pub fn new(addr: &str, timeout: Duration) -> Self {
        Self {
            client: SidecarClient::new(addr, timeout),
        }
    }
}

impl SentimentProvider for SidecarSentiment {
    fn id(&self) -> &str {
        "sidecar"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn score_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<ConfidenceTriple>, SentimentError> {
        let items: Vec<(i64, &str)> = batch
            .iter()
            .map(|c| (c.caption_id, c.text.as_str()))
            .collect();
        self.client
            .request_batch(&items)?
            .into_iter()
            .map(|v: Value| {
                let line: ScoreLine = serde_json::from_value(v).map_err(|e| {
                    SentimentError::ProviderUnavailable(format!("bad score line: {e}"))
                })?;
                ConfidenceTriple::new(line.neg, line.neu, line.pos)
            })
            .collect()
    }
}

fn load_cached(path: &Path) -> Result<BTreeMap<i64, SentimentRecord>, SentimentError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(load_scores(path)?
        .into_iter()
        .map(|r| (r.caption_id, r))
        .collect())
}

/// Scores every caption of `corpus`, reusing cached scores when a cache is
/// given and writing newly computed ones back to it.
pub fn score_corpus(
    corpus: &Corpus,
    provider: &dyn SentimentProvider,
    cache: Option<&ProviderCache>,
    jobs: usize,
) -> Result<(BTreeMap<i64, SentimentRecord>, ScoringStats), SentimentError> {
    let cache_path =
        cache.map(|c| c.path_for("scores", provider.id(), provider.version(), corpus.source()));
    let mut cached = match &cache_path {
        Some(p) => load_cached(p)?,
        None => BTreeMap::new(),
    };

    let todo: Vec<&CaptionRecord> = corpus
        .captions()
        .filter(|c| !cached.contains_key(&c.caption_id))
        .collect();
    let mut stats = ScoringStats {
        cached: corpus.caption_count() - todo.len(),
        computed: todo.len(),
        provider_calls: 0,
    };

    let calls = AtomicUsize::new(0);
    let label = provider.label();
    let run_batch = |batch: &[&CaptionRecord]| -> Result<Vec<SentimentRecord>, SentimentError> {
        calls.fetch_add(1, Ordering::Relaxed);
        let triples = provider.score_batch(batch)?;
        if triples.len() != batch.len() {
            return Err(SentimentError::ProviderUnavailable(format!(
                "provider returned {} triples for {} captions",
                triples.len(),
                batch.len()
            )));
        }
        Ok(batch
            .iter()
            .zip(triples)
            .map(|(c, t)| SentimentRecord::new(c.caption_id, t, label.clone()))
            .collect())
    };
    let results: Vec<Result<Vec<SentimentRecord>, SentimentError>> = if provider.concurrent() {
        with_jobs(jobs, || {
            todo.par_chunks(BATCH_SIZE).map(run_batch).collect()
        })
    } else {
        todo.chunks(BATCH_SIZE).map(run_batch).collect()
    };
    stats.provider_calls = calls.into_inner();

    let mut fresh = Vec::with_capacity(todo.len());
    let mut missing = Vec::new();
    for r in results {
        match r {
            Ok(batch) => fresh.extend(batch),
            Err(SentimentError::MissingScore(ids)) => missing.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(SentimentError::MissingScore(missing));
    }

    if let (Some(c), Some(p)) = (cache, &cache_path) {
        if !fresh.is_empty() {
            for r in &fresh {
                cached.insert(r.caption_id, r.clone());
            }
            let io = |source| SentimentError::Cache {
                path: p.clone(),
                source,
            };
            c.ensure_dir().map_err(io)?;
            write_scores(p, cached.values()).map_err(|e| match e {
                crate::ndjson::NdjsonError::Io { source, .. } => io(source),
                other => SentimentError::SchemaViolation {
                    path: p.clone(),
                    source: other,
                },
            })?;
        }
    } else {
        cached.clear();
    }
    for r in fresh {
        cached.insert(r.caption_id, r);
    }
    cached.retain(|id, _| corpus.caption(*id).is_some());
    Ok((cached, stats))
}
