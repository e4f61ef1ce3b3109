//! Aggregate statistics over a scored corpus and the audit report built
//! from them.

mod emit;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::regression::{pearson_r, RegressionError, RegressionResult, SignificanceFlag};
use crate::sentiment::{is_strong, SentimentRecord, StrongThreshold};

pub use emit::{emit_report, format_float, report_json, round_sig, PerImageRow};

pub const DEFAULT_SENTIMENT_BINS: usize = 40;
pub const DEFAULT_VARIABILITY_BINS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("bad histogram range [{lo}, {hi}] with {n_bins} bins")]
    BadRange { lo: f64, hi: f64, n_bins: usize },
    #[error("caption {0} has no sentiment score")]
    MissingScore(i64),
    #[error("only {0} images join human and model captions, need at least 3")]
    TooFewPairs(usize),
    #[error("histograms with different layouts cannot be merged")]
    LayoutMismatch,
    #[error("cannot write {path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Fixed-width bins over `[lo, hi]`. Bin `b` is `[lo + b*w, lo + (b+1)*w)`
/// except the last, which is closed at `hi`. Values below `lo` count as
/// underflow; values above `hi` and NaN count as overflow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Result<Self, ReportError> {
        if n_bins == 0 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(ReportError::BadRange { lo, hi, n_bins });
        }
        Ok(Self {
            lo,
            hi,
            n_bins,
            counts: vec![0; n_bins],
            underflow: 0,
            overflow: 0,
        })
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    /// Left edge of bin `b`; `edge(n_bins)` is `hi`.
    pub fn edge(&self, b: usize) -> f64 {
        if b >= self.n_bins {
            self.hi
        } else {
            self.lo + b as f64 * self.width()
        }
    }

    pub fn add(&mut self, v: f64) {
        if v.is_nan() || v > self.hi {
            self.overflow += 1;
            return;
        }
        if v < self.lo {
            self.underflow += 1;
            return;
        }
        let n = self.n_bins;
        let mut b = (((v - self.lo) / self.width()).floor() as usize).min(n - 1);
        // settle against the edges as computed by `edge`
        while b > 0 && v < self.edge(b) {
            b -= 1;
        }
        while b + 1 < n && v >= self.edge(b + 1) {
            b += 1;
        }
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Adds another histogram with the same layout.
    pub fn merge(&mut self, other: &Histogram) -> Result<(), ReportError> {
        if self.lo != other.lo || self.hi != other.hi || self.n_bins != other.n_bins {
            return Err(ReportError::LayoutMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

pub fn histogram(
    values: &[f64],
    lo: f64,
    hi: f64,
    n_bins: usize,
) -> Result<Histogram, ReportError> {
    let mut h = Histogram::new(lo, hi, n_bins)?;
    values.iter().for_each(|v| h.add(*v));
    Ok(h)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StrongCountBreakdown {
    pub captions_strong: u64,
    pub images_with_strong: u64,
    /// k -> number of images with exactly k strong captions (k >= 1)
    pub by_multiplicity: BTreeMap<u64, u64>,
}

impl StrongCountBreakdown {
    fn add_image(&mut self, strong: u64) {
        if strong > 0 {
            self.captions_strong += strong;
            self.images_with_strong += 1;
            *self.by_multiplicity.entry(strong).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &StrongCountBreakdown) {
        self.captions_strong += other.captions_strong;
        self.images_with_strong += other.images_with_strong;
        for (k, v) in &other.by_multiplicity {
            *self.by_multiplicity.entry(*k).or_default() += v;
        }
    }
}

fn score_of(scores: &BTreeMap<i64, SentimentRecord>, caption_id: i64) -> Result<f64, ReportError> {
    scores
        .get(&caption_id)
        .map(|r| r.score)
        .ok_or(ReportError::MissingScore(caption_id))
}

fn image_scores(
    scores: &BTreeMap<i64, SentimentRecord>,
    image: &crate::corpus::ImageRecord,
) -> Result<Vec<f64>, ReportError> {
    image
        .caption_ids
        .iter()
        .map(|id| score_of(scores, *id))
        .collect()
}

pub fn strong_breakdown(
    scores: &BTreeMap<i64, SentimentRecord>,
    corpus: &Corpus,
    th: StrongThreshold,
) -> Result<StrongCountBreakdown, ReportError> {
    let mut out = StrongCountBreakdown::default();
    for img in corpus.images() {
        let strong = image_scores(scores, img)?
            .into_iter()
            .filter(|s| is_strong(*s, th))
            .count();
        out.add_image(strong as u64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerImageMoments {
    pub image_id: i64,
    pub mean_score: f64,
    /// Sample standard deviation; 0 for single-caption images.
    pub sd_score: f64,
    pub n: usize,
}

pub fn per_image_moments(
    scores: &BTreeMap<i64, SentimentRecord>,
    corpus: &Corpus,
) -> Result<Vec<PerImageMoments>, ReportError> {
    corpus
        .images()
        .map(|img| {
            let s = image_scores(scores, img)?;
            let (mean, sd) = mean_sd(&s);
            Ok(PerImageMoments {
                image_id: img.image_id,
                mean_score: mean,
                sd_score: sd,
                n: s.len(),
            })
        })
        .collect()
}

/// Mean and sample standard deviation (0 when fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

impl std::str::FromStr for HumanJoin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(HumanJoin::Mean),
            "max_abs" => Ok(HumanJoin::MaxAbs),
            other => Err(format!(
                "unknown human join `{other}` (expected mean or max_abs)"
            )),
        }
    }
}

/// How the several human captions of an image are reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanJoin {
    #[default]
    Mean,
    /// The caption with the largest |score|; ties go to the lowest caption id.
    MaxAbs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Contingency {
    pub both_strong: u64,
    pub human_only: u64,
    pub model_only: u64,
    pub neither: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub join: HumanJoin,
    pub n_pairs: usize,
    pub unmatched_model_images: usize,
    pub human_images_without_model: usize,
    /// None when either side has zero variance.
    pub pearson_r: Option<f64>,
    pub human_strong_fraction: f64,
    pub model_strong_fraction: f64,
    /// Image-level: an image is human-strong when any of its human captions
    /// is strong.
    pub contingency: Contingency,
}

/// Joins human and model captions by image. Each image contributes one
/// pair: the aggregated human score and the model score (averaged if the
/// model produced more than one caption).
pub fn compare_human_model(
    human_scores: &BTreeMap<i64, SentimentRecord>,
    model_scores: &BTreeMap<i64, SentimentRecord>,
    human: &Corpus,
    model: &Corpus,
    th: StrongThreshold,
    join: HumanJoin,
) -> Result<Comparison, ReportError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut unmatched_model_images = 0;
    let mut contingency = Contingency::default();
    let (mut human_caps, mut human_strong) = (0usize, 0usize);
    let (mut model_caps, mut model_strong) = (0usize, 0usize);

    for m_img in model.images() {
        let Some(h_img) = human.image(m_img.image_id) else {
            unmatched_model_images += 1;
            continue;
        };
        let hs = image_scores(human_scores, h_img)?;
        let ms = image_scores(model_scores, m_img)?;
        let h_value = match join {
            HumanJoin::Mean => mean_sd(&hs).0,
            HumanJoin::MaxAbs => hs
                .iter()
                .copied()
                .fold(None, |best: Option<f64>, s| match best {
                    Some(b) if b.abs() >= s.abs() => Some(b),
                    _ => Some(s),
                })
                .expect("images have captions"),
        };
        xs.push(h_value);
        ys.push(mean_sd(&ms).0);

        let h_n = hs.iter().filter(|s| is_strong(**s, th)).count();
        let m_n = ms.iter().filter(|s| is_strong(**s, th)).count();
        human_caps += hs.len();
        human_strong += h_n;
        model_caps += ms.len();
        model_strong += m_n;
        match (h_n > 0, m_n > 0) {
            (true, true) => contingency.both_strong += 1,
            (true, false) => contingency.human_only += 1,
            (false, true) => contingency.model_only += 1,
            (false, false) => contingency.neither += 1,
        }
    }

    let n_pairs = xs.len();
    if n_pairs < 3 {
        return Err(ReportError::TooFewPairs(n_pairs));
    }
    let r = match pearson_r(&xs, &ys) {
        Ok(r) => Some(r),
        Err(RegressionError::ZeroVariance) => None,
        Err(e) => unreachable!("equal-length inputs with >= 3 pairs: {e}"),
    };
    Ok(Comparison {
        join,
        n_pairs,
        unmatched_model_images,
        human_images_without_model: human.image_count() - n_pairs,
        pearson_r: r,
        human_strong_fraction: human_strong as f64 / human_caps as f64,
        model_strong_fraction: model_strong as f64 / model_caps as f64,
        contingency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub sentiment_provider: String,
    pub model_sentiment_provider: Option<String>,
    pub embedding_provider: String,
    pub strong_threshold: f64,
    pub alpha: f64,
    pub bins_sentiment: usize,
    pub bins_variability: usize,
    pub human_join: HumanJoin,
    pub corpus_sha256: String,
    pub model_corpus_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub images: usize,
    pub captions: usize,
    pub categories: usize,
    /// caption count -> number of images
    pub captions_per_image: BTreeMap<usize, usize>,
    pub model_images: Option<usize>,
    pub model_captions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histograms {
    pub sentiment_human: Histogram,
    pub sentiment_model: Option<Histogram>,
    pub variability: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self {
            n: values.len(),
            mean,
            sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongSummary {
    pub human: StrongCountBreakdown,
    pub human_fraction: f64,
    pub model: Option<StrongCountBreakdown>,
    pub model_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSummary {
    pub n_obs: usize,
    pub fit: Option<RegressionResult>,
    pub significance: Vec<SignificanceFlag>,
    /// Why no fit was produced.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regressions {
    pub all: RegressionSummary,
    pub strong_human: RegressionSummary,
    pub strong_model: Option<RegressionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlations {
    /// Per image: semantic variability vs mean human caption score.
    pub variability_vs_sentiment: Option<f64>,
    pub human_vs_model: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilitySummary {
    pub moments: Moments,
    pub single_caption_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub provenance: Provenance,
    pub corpus: CorpusSummary,
    pub sentiment_human: Moments,
    pub sentiment_model: Option<Moments>,
    pub variability: VariabilitySummary,
    pub histograms: Histograms,
    pub strong: StrongSummary,
    pub regressions: Regressions,
    pub correlations: Correlations,
    pub comparison: Option<Comparison>,
    pub comparison_skipped: Option<String>,
}
