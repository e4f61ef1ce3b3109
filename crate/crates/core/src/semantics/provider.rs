//! Embedding providers and corpus-wide embedding.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    hash_embedding, load_embeddings, write_embeddings, EmbeddingLine, EmbeddingVector,
    SemanticsError,
};
use crate::cache::{ProviderCache, ScoringStats};
use crate::corpus::{CaptionRecord, Corpus};
use crate::parallel::with_jobs;
use crate::sidecar::SidecarClient;

const BATCH_SIZE: usize = 64;

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn version(&self) -> &str;

    fn label(&self) -> String {
        format!("{}@{}", self.id(), self.version())
    }

    fn concurrent(&self) -> bool {
        true
    }

    /// One vector per caption, in input order.
    fn embed_batch(&self, batch: &[&CaptionRecord])
        -> Result<Vec<EmbeddingVector>, SemanticsError>;
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    version: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self {
            dim,
            version: format!("1-d{dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(super::DEFAULT_HASH_DIM)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> &str {
        "hash"
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn embed_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<EmbeddingVector>, SemanticsError> {
        Ok(batch
            .iter()
            .map(|c| hash_embedding(c.caption_id, &c.text, self.dim))
            .collect())
    }
}

/// Precomputed vectors from an embedding-NDJSON file.
pub struct FileEmbeddings {
    vectors: BTreeMap<i64, EmbeddingVector>,
    version: String,
    label: Option<String>,
}

impl FileEmbeddings {
    pub fn open(path: &Path) -> Result<Self, SemanticsError> {
        let bytes = std::fs::read(path).map_err(|source| SemanticsError::Cache {
            path: path.to_path_buf(),
            source,
        })?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let loaded = load_embeddings(path)?;
        let mut labels: Vec<Option<&str>> = loaded.iter().map(|(_, p)| p.as_deref()).collect();
        labels.sort_unstable();
        labels.dedup();
        let label = match labels.as_slice() {
            [Some(single)] => Some(single.to_string()),
            _ => None,
        };
        Ok(Self {
            vectors: loaded.into_iter().map(|(v, _)| (v.caption_id, v)).collect(),
            version: digest[..12].to_owned(),
            label,
        })
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn id(&self) -> &str {
        "file"
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("file@{}", self.version))
    }

    fn embed_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<EmbeddingVector>, SemanticsError> {
        let missing: Vec<i64> = batch
            .iter()
            .filter(|c| !self.vectors.contains_key(&c.caption_id))
            .map(|c| c.caption_id)
            .collect();
        if !missing.is_empty() {
            return Err(SemanticsError::MissingEmbedding(missing));
        }
        Ok(batch
            .iter()
            .map(|c| self.vectors[&c.caption_id].clone())
            .collect())
    }
}

/// Streams captions to an external embedding model. Serial.
pub struct SidecarEmbeddings {
    client: SidecarClient,
}

impl SidecarEmbeddings {
    pub fn new(addr: &str, timeout: Duration) -> Self {
        Self {
            client: SidecarClient::new(addr, timeout),
        }
    }
}

impl EmbeddingProvider for SidecarEmbeddings {
    fn id(&self) -> &str {
        "sidecar"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn embed_batch(
        &self,
        batch: &[&CaptionRecord],
    ) -> Result<Vec<EmbeddingVector>, SemanticsError> {
        let items: Vec<(i64, &str)> = batch
            .iter()
            .map(|c| (c.caption_id, c.text.as_str()))
            .collect();
        self.client
            .request_batch(&items)?
            .into_iter()
            .map(|v: Value| {
                let line: EmbeddingLine = serde_json::from_value(v).map_err(|e| {
                    SemanticsError::ProviderUnavailable(format!("bad embedding line: {e}"))
                })?;
                EmbeddingVector::new(line.caption_id, line.values)
            })
            .collect()
    }
}

fn load_cached(path: &Path) -> Result<BTreeMap<i64, EmbeddingVector>, SemanticsError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(load_embeddings(path)?
        .into_iter()
        .map(|(v, _)| (v.caption_id, v))
        .collect())
}

/// Embeds every caption of `corpus` and groups the vectors by image in
/// ascending caption id order. All vectors must share one dimension.
pub fn embed_corpus(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    cache: Option<&ProviderCache>,
    jobs: usize,
) -> Result<(BTreeMap<i64, Vec<EmbeddingVector>>, ScoringStats), SemanticsError> {
    let cache_path = cache.map(|c| {
        c.path_for(
            "embeddings",
            provider.id(),
            provider.version(),
            corpus.source(),
        )
    });
    let mut known = match &cache_path {
        Some(p) => load_cached(p)?,
        None => BTreeMap::new(),
    };
    let todo: Vec<&CaptionRecord> = corpus
        .captions()
        .filter(|c| !known.contains_key(&c.caption_id))
        .collect();
    let mut stats = ScoringStats {
        cached: corpus.caption_count() - todo.len(),
        computed: todo.len(),
        provider_calls: 0,
    };

    let calls = AtomicUsize::new(0);
    let run_batch = |batch: &[&CaptionRecord]| {
        calls.fetch_add(1, Ordering::Relaxed);
        let out = provider.embed_batch(batch)?;
        if out.len() != batch.len() {
            return Err(SemanticsError::ProviderUnavailable(format!(
                "provider returned {} vectors for {} captions",
                out.len(),
                batch.len()
            )));
        }
        Ok(batch
            .iter()
            .zip(out)
            .map(|(c, mut v)| {
                v.caption_id = c.caption_id;
                v
            })
            .collect::<Vec<_>>())
    };
    let results: Vec<Result<Vec<EmbeddingVector>, SemanticsError>> = if provider.concurrent() {
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
            Err(SemanticsError::MissingEmbedding(ids)) => missing.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(SemanticsError::MissingEmbedding(missing));
    }

    let cached_before = !known.is_empty();
    for v in fresh {
        known.insert(v.caption_id, v);
    }
    if let (Some(c), Some(p)) = (cache, &cache_path) {
        if stats.computed > 0 || !cached_before {
            let io = |source| SemanticsError::Cache {
                path: p.clone(),
                source,
            };
            c.ensure_dir().map_err(io)?;
            write_embeddings(p, known.values(), &provider.label()).map_err(|e| match e {
                crate::ndjson::NdjsonError::Io { source, .. } => io(source),
                other => SemanticsError::SchemaViolation {
                    path: p.clone(),
                    source: other,
                },
            })?;
        }
    }

    let mut dim = None;
    let mut by_image: BTreeMap<i64, Vec<EmbeddingVector>> = BTreeMap::new();
    for img in corpus.images() {
        let vecs = by_image.entry(img.image_id).or_default();
        for id in &img.caption_ids {
            let v = &known[id];
            match dim {
                None => dim = Some(v.dim()),
                Some(d) if d != v.dim() => {
                    return Err(SemanticsError::DimensionMismatch {
                        expected: d,
                        found: v.dim(),
                    })
                }
                Some(_) => {}
            }
            vecs.push(v.clone());
        }
    }
    Ok((by_image, stats))
}
