//! Caption sentiment: confidence triples, scores and the strong-sentiment
//! classification.

mod lexicon;
mod provider;

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ndjson::{self, NdjsonError};
use crate::sidecar::SidecarError;

pub use lexicon::{lexicon_score, Lexicon, LEXICON_VERSION};
pub use provider::{
    score_corpus, FileScores, LexiconProvider, SentimentProvider, SidecarSentiment,
};

/// Allowed deviation of `neg + neu + pos` from 1.
pub const TRIPLE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("invalid confidence triple ({neg}, {neu}, {pos})")]
    InvalidTriple { neg: f64, neu: f64, pos: f64 },
    #[error("strong threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
    #[error("score file {path}: {source}")]
    SchemaViolation { path: PathBuf, source: NdjsonError },
    #[error("{} caption(s) have no score, first missing caption_id {}", .0.len(), .0[0])]
    MissingScore(Vec<i64>),
    #[error("sentiment provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("score cache {path}: {source}")]
    Cache { path: PathBuf, source: io::Error },
}

impl From<SidecarError> for SentimentError {
    fn from(e: SidecarError) -> Self {
        SentimentError::ProviderUnavailable(e.to_string())
    }
}

/// Class confidences of one caption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceTriple {
    neg: f64,
    neu: f64,
    pos: f64,
}

impl ConfidenceTriple {
    pub fn new(neg: f64, neu: f64, pos: f64) -> Result<Self, SentimentError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(neg) && unit(neu) && unit(pos))
            || ((neg + neu + pos) - 1.0).abs() > TRIPLE_SUM_TOLERANCE
        {
            return Err(SentimentError::InvalidTriple { neg, neu, pos });
        }
        Ok(Self { neg, neu, pos })
    }

    pub const NEUTRAL: ConfidenceTriple = ConfidenceTriple {
        neg: 0.0,
        neu: 1.0,
        pos: 0.0,
    };

    pub fn neg(&self) -> f64 {
        self.neg
    }

    pub fn neu(&self) -> f64 {
        self.neu
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }
}

/// Positive minus negative confidence, in [-1, 1].
pub fn score_from_triple(t: &ConfidenceTriple) -> f64 {
    t.pos - t.neg
}

/// Magnitude a score must strictly exceed to count as strong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StrongThreshold(f64);

impl StrongThreshold {
    pub fn new(value: f64) -> Result<Self, SentimentError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(SentimentError::InvalidThreshold(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for StrongThreshold {
    fn default() -> Self {
        Self(0.5)
    }
}

pub fn is_strong(score: f64, th: StrongThreshold) -> bool {
    score > th.0 || score < -th.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentRecord {
    pub caption_id: i64,
    pub triple: ConfidenceTriple,
    pub score: f64,
    /// `id@version` of the provider that produced the triple.
    pub provider: String,
}

impl SentimentRecord {
    pub fn new(caption_id: i64, triple: ConfidenceTriple, provider: impl Into<String>) -> Self {
        Self {
            caption_id,
            triple,
            score: score_from_triple(&triple),
            provider: provider.into(),
        }
    }

    pub fn to_line(&self) -> ScoreLine {
        ScoreLine {
            caption_id: self.caption_id,
            neg: self.triple.neg,
            neu: self.triple.neu,
            pos: self.triple.pos,
            provider: Some(self.provider.clone()),
        }
    }
}

/// One line of a score-NDJSON file. A stored `score` field, if any, is
/// ignored on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub caption_id: i64,
    pub neg: f64,
    pub neu: f64,
    pub pos: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

impl ScoreLine {
    pub fn into_record(self) -> Result<SentimentRecord, SentimentError> {
        let triple = ConfidenceTriple::new(self.neg, self.neu, self.pos)?;
        Ok(SentimentRecord::new(
            self.caption_id,
            triple,
            self.provider.unwrap_or_else(|| "file".into()),
        ))
    }
}

/// Reads a score-NDJSON file, recomputing every score from its triple.
pub fn load_scores(path: &Path) -> Result<Vec<SentimentRecord>, SentimentError> {
    let schema = |source| SentimentError::SchemaViolation {
        path: path.to_path_buf(),
        source,
    };
    let lines: Vec<ScoreLine> = ndjson::read_records(path).map_err(schema)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.into_record().map_err(|e| {
                schema(NdjsonError::Schema {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

pub fn write_scores<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a SentimentRecord>,
) -> Result<(), NdjsonError> {
    let lines: Vec<ScoreLine> = records.into_iter().map(SentimentRecord::to_line).collect();
    ndjson::write_records(path, &lines)
}
