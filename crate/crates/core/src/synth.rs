//! Seeded synthetic corpora with planted category effects.
//!
//! Every caption's score is `intercept + Σ planted[k]·x_k + noise` with
//! independent uniform noise, written as a confidence triple so the score is
//! recovered exactly. Magnitudes are bounded so no score needs clipping to
//! [-1, 1], keeping the linear model exact.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::sentiment::{write_scores, ConfidenceTriple, SentimentRecord};

pub const SYNTH_PROVIDER: &str = "synthetic@1";
pub const CAPTIONS_FILE: &str = "captions.json";
pub const INSTANCES_FILE: &str = "instances.json";
pub const SCORES_FILE: &str = "scores.ndjson";
pub const PLANTED_FILE: &str = "planted.json";

/// Largest |coefficient| drawn when no vector is given.
pub const DEFAULT_EFFECT_SCALE: f64 = 0.15;
pub const DEFAULT_NOISE: f64 = 0.3;
pub const DEFAULT_INTERCEPT: f64 = 0.05;
pub const MAX_CATEGORIES_PER_IMAGE: usize = 3;

const ADJECTIVES: &[&str] = &[
    "small", "large", "wide", "new", "red", "blue", "quiet", "busy",
];
const SCENES: &[&str] = &[
    "street", "kitchen", "park", "room", "field", "beach", "office",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub captions: usize,
    pub categories: usize,
    /// Planted coefficients; drawn from the seed when absent.
    pub planted: Option<Vec<f64>>,
    pub null_effects: bool,
    pub intercept: f64,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            captions: 5000,
            categories: 20,
            planted: None,
            null_effects: false,
            intercept: DEFAULT_INTERCEPT,
            noise: DEFAULT_NOISE,
        }
    }
}

/// The generating coefficients, keyed like the regression labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub seed: u64,
    pub intercept: f64,
    pub noise: f64,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub captions_json: serde_json::Value,
    pub instances_json: serde_json::Value,
    pub scores: Vec<SentimentRecord>,
    pub planted: Planted,
}

pub fn category_name(k: usize) -> String {
    format!("category_{k:02}")
}

fn validate(cfg: &SynthConfig) -> Result<Vec<f64>> {
    if cfg.categories == 0 || cfg.captions == 0 {
        return Err(Error::Usage(
            "synthetic corpus needs at least one caption and category".into(),
        ));
    }
    if cfg.noise.is_nan() || cfg.noise < 0.0 {
        return Err(Error::Usage("noise must be non-negative".into()));
    }
    let betas = match (&cfg.planted, cfg.null_effects) {
        (_, true) => vec![0.0; cfg.categories],
        (Some(b), false) => {
            if b.len() != cfg.categories {
                return Err(Error::Usage(format!(
                    "{} planted coefficients for {} categories",
                    b.len(),
                    cfg.categories
                )));
            }
            b.clone()
        }
        (None, false) => Vec::new(),
    };
    Ok(betas)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let mut betas = validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if betas.is_empty() {
        betas = (0..cfg.categories)
            .map(|_| rng.gen_range(-DEFAULT_EFFECT_SCALE..=DEFAULT_EFFECT_SCALE))
            .collect();
    }
    let mut top: Vec<f64> = betas.iter().map(|b| b.abs()).collect();
    top.sort_by(|a, b| b.total_cmp(a));
    let bound =
        cfg.intercept.abs() + top.iter().take(MAX_CATEGORIES_PER_IMAGE).sum::<f64>() + cfg.noise;
    if bound > 1.0 {
        return Err(Error::Usage(format!(
            "planted effects and noise can reach |score| = {bound}, which exceeds 1"
        )));
    }

    let categories: Vec<_> = (0..cfg.categories)
        .map(|k| json!({"id": k + 1, "name": category_name(k), "supercategory": format!("group_{}", k % 4)}))
        .collect();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut instances = Vec::new();
    let mut scores = Vec::new();
    let mut written = 0usize;
    let mut instance_id = 1i64;
    let mut image_id = 100_000i64;
    while written < cfg.captions {
        image_id += 1;
        let n_caps = rng.gen_range(4..=6).min(cfg.captions - written);
        let m = rng.gen_range(0..=MAX_CATEGORIES_PER_IMAGE.min(cfg.categories));
        let mut present: Vec<usize> = sample(&mut rng, cfg.categories, m).into_vec();
        present.sort_unstable();
        for &k in &present {
            for _ in 0..rng.gen_range(1..=2) {
                instances.push(json!({"id": instance_id, "image_id": image_id, "category_id": k + 1, "iscrowd": 0}));
                instance_id += 1;
            }
        }
        images.push(json!({"id": image_id, "file_name": format!("{image_id:012}.jpg")}));
        let signal = cfg.intercept + present.iter().map(|&k| betas[k]).sum::<f64>();
        let subject = if present.is_empty() {
            "nothing in particular".to_string()
        } else {
            present
                .iter()
                .map(|&k| category_name(k))
                .collect::<Vec<_>>()
                .join(" and ")
        };
        for _ in 0..n_caps {
            written += 1;
            let caption_id = written as i64;
            let text = format!(
                "a {} {} with {}",
                ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())],
                SCENES[rng.gen_range(0..SCENES.len())],
                subject
            );
            annotations.push(json!({"id": caption_id, "image_id": image_id, "caption": text}));
            let y = signal + cfg.noise * rng.gen_range(-1.0..=1.0);
            let (pos, neg) = (y.max(0.0), (-y).max(0.0));
            let triple = ConfidenceTriple::new(neg, 1.0 - pos - neg, pos)?;
            scores.push(SentimentRecord::new(caption_id, triple, SYNTH_PROVIDER));
        }
    }
    // A few annotated images without captions, as real dumps have.
    let captioned = images.len();
    for extra in 0..(captioned / 100).max(1) {
        let id = image_id + 1 + extra as i64;
        images.push(json!({"id": id, "file_name": format!("{id:012}.jpg")}));
        instances.push(json!({"id": instance_id, "image_id": id, "category_id": 1, "iscrowd": 0}));
        instance_id += 1;
    }

    let caption_images = images[..captioned].to_vec();
    Ok(SynthCorpus {
        captions_json: json!({"images": caption_images, "annotations": annotations}),
        instances_json: json!({"images": images, "annotations": instances, "categories": categories}),
        scores,
        planted: Planted {
            seed: cfg.seed,
            intercept: cfg.intercept,
            noise: cfg.noise,
            labels: (0..cfg.categories).map(category_name).collect(),
            coefficients: betas,
        },
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `captions.json`, `instances.json`, `scores.ndjson` and
/// `planted.json` into `dir`.
pub fn write_synth(corpus: &SynthCorpus, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = [CAPTIONS_FILE, INSTANCES_FILE, SCORES_FILE, PLANTED_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_json(&paths[0], &corpus.captions_json)?;
    write_json(&paths[1], &corpus.instances_json)?;
    write_scores(&paths[2], corpus.scores.iter())?;
    write_json(&paths[3], &corpus.planted)?;
    Ok(paths)
}
