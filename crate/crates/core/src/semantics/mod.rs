//! Within-image semantic variability of caption embeddings.
//!
//! For the embeddings `a_1..a_N` of one image's captions, the variability is
//!
//! ```text
//! s = sqrt( 1/(N(N-1)) * sum over ordered pairs i != j of cos(a_i, a_j)^2 )
//! ```
//!
//! which is the root mean square of all off-diagonal pairwise cosine
//! similarities. Despite the name it grows when captions agree: identical
//! captions give `s = 1`, mutually orthogonal ones give `s = 0`.

mod hash;
mod provider;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ndjson::{self, NdjsonError};
use crate::parallel::with_jobs;
use crate::sidecar::SidecarError;

pub use hash::{fnv1a_64, hash_embedding, DEFAULT_HASH_DIM};
pub use provider::{
    embed_corpus, EmbeddingProvider, FileEmbeddings, HashEmbedder, SidecarEmbeddings,
};

#[derive(Debug, thiserror::Error)]
pub enum SemanticsError {
    #[error("zero-norm embedding{}", .0.map(|id| format!(" for caption {id}")).unwrap_or_default())]
    ZeroVector(Option<i64>),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variability needs at least 2 captions, got {0}")]
    TooFewCaptions(usize),
    #[error("embedding file {path}: {source}")]
    SchemaViolation { path: PathBuf, source: NdjsonError },
    #[error("{} caption(s) have no embedding, first missing caption_id {}", .0.len(), .0[0])]
    MissingEmbedding(Vec<i64>),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding cache {path}: {source}")]
    Cache { path: PathBuf, source: io::Error },
}

impl From<SidecarError> for SemanticsError {
    fn from(e: SidecarError) -> Self {
        SemanticsError::ProviderUnavailable(e.to_string())
    }
}

/// A caption embedding with non-zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub caption_id: i64,
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(caption_id: i64, values: Vec<f64>) -> Result<Self, SemanticsError> {
        if !values.iter().any(|v| *v != 0.0) || !values.iter().all(|v| v.is_finite()) {
            return Err(SemanticsError::ZeroVector(Some(caption_id)));
        }
        Ok(Self { caption_id, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// One line of an embedding-NDJSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub caption_id: i64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilityRecord {
    pub image_id: i64,
    pub n_captions: usize,
    pub s: f64,
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SemanticsError> {
    if u.len() != v.len() {
        return Err(SemanticsError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(SemanticsError::ZeroVector(None));
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Root mean squared cosine similarity over all ordered pairs of distinct
/// embeddings. Pairs are visited in row-major `(i, j)` order.
pub fn semantic_variability<V: AsRef<[f64]>>(embeddings: &[V]) -> Result<f64, SemanticsError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(SemanticsError::TooFewCaptions(n));
    }
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine_similarity(embeddings[i].as_ref(), embeddings[j].as_ref())?;
            sim[i * n + j] = c;
            sim[j * n + i] = c;
        }
    }
    let mut acc = CompensatedSum::default();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = sim[i * n + j];
                acc.add(c * c);
            }
        }
    }
    Ok((acc.value() / (n * (n - 1)) as f64).sqrt())
}

/// Variability of every image with at least two embeddings. Returns the
/// records in ascending image id order and the ids of skipped images.
pub fn variability_by_image(
    embeddings: &BTreeMap<i64, Vec<EmbeddingVector>>,
    jobs: usize,
) -> Result<(Vec<VariabilityRecord>, Vec<i64>), SemanticsError> {
    let (eligible, skipped): (Vec<_>, Vec<_>) = embeddings.iter().partition(|(_, v)| v.len() >= 2);
    let records = with_jobs(jobs, || {
        eligible
            .par_iter()
            .map(|(id, vecs)| {
                Ok(VariabilityRecord {
                    image_id: **id,
                    n_captions: vecs.len(),
                    s: semantic_variability(vecs)?,
                })
            })
            .collect::<Result<Vec<_>, SemanticsError>>()
    })?;
    Ok((records, skipped.into_iter().map(|(id, _)| *id).collect()))
}

/// Reads an embedding-NDJSON file. All vectors must share one dimension.
pub fn load_embeddings(
    path: &Path,
) -> Result<Vec<(EmbeddingVector, Option<String>)>, SemanticsError> {
    let schema = |source| SemanticsError::SchemaViolation {
        path: path.to_path_buf(),
        source,
    };
    let lines: Vec<EmbeddingLine> = ndjson::read_records(path).map_err(schema)?;
    let mut dim = None;
    let mut out = Vec::with_capacity(lines.len());
    for (i, l) in lines.into_iter().enumerate() {
        let v = EmbeddingVector::new(l.caption_id, l.values).map_err(|e| {
            schema(NdjsonError::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })?;
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
        out.push((v, l.provider));
    }
    Ok(out)
}

pub fn write_embeddings<'a>(
    path: &Path,
    vectors: impl IntoIterator<Item = &'a EmbeddingVector>,
    provider: &str,
) -> Result<(), NdjsonError> {
    let lines: Vec<EmbeddingLine> = vectors
        .into_iter()
        .map(|v| EmbeddingLine {
            caption_id: v.caption_id,
            values: v.values.clone(),
            provider: Some(provider.to_owned()),
        })
        .collect();
    ndjson::write_records(path, &lines)
}
