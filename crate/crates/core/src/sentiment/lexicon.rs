//! Deterministic word-list sentiment, used when no model is available.

use std::collections::HashSet;
use std::sync::OnceLock;

use super::ConfidenceTriple;
use crate::text::tokenize;

pub const LEXICON_VERSION: &str = "1";

const LEXICON_V1: &str = include_str!("../../data/lexicon-v1.txt");

pub struct Lexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Lexicon {
    pub fn parse(source: &str) -> Self {
        let mut positive = HashSet::new();
        let mut negative = HashSet::new();
        for line in source.lines().map(str::trim) {
            if let Some(w) = line.strip_prefix('+') {
                positive.insert(w.to_owned());
            } else if let Some(w) = line.strip_prefix('-') {
                negative.insert(w.to_owned());
            }
        }
        Self { positive, negative }
    }

    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(LEXICON_V1))
    }

    pub fn score(&self, text: &str) -> ConfidenceTriple {
        let tokens = tokenize(text);
        let pos_hits = tokens.iter().filter(|t| self.positive.contains(*t)).count();
        let neg_hits = tokens.iter().filter(|t| self.negative.contains(*t)).count();
        let hits = pos_hits + neg_hits;
        if hits == 0 {
            return ConfidenceTriple::NEUTRAL;
        }
        let raw = (pos_hits as f64 - neg_hits as f64) / hits as f64;
        let intensity = (hits as f64 / tokens.len() as f64 * 4.0).min(1.0);
        let pos = raw.max(0.0) * intensity;
        let neg = (-raw).max(0.0) * intensity;
        ConfidenceTriple {
            neg,
            neu: 1.0 - pos - neg,
            pos,
        }
    }
}

/// Scores `text` with the built-in lexicon.
pub fn lexicon_score(text: &str) -> ConfidenceTriple {
    Lexicon::builtin().score(text)
}
