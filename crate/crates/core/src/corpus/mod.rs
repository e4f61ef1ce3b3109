//! Caption and category annotations joined by image id.

mod coco;
mod store;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use coco::{parse_captions, parse_captions_with_source, parse_instances, PresenceMap};
pub use store::{read_corpus, write_corpus};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed JSON at byte offset {offset}: {message}")]
    MalformedJson { offset: usize, message: String },
    #[error("missing key `{field}`{}", .index.map(|i| format!(" in entry {i}")).unwrap_or_default())]
    MissingKey { field: String, index: Option<usize> },
    #[error("field `{field}` in entry {index} is not {expected}")]
    InvalidField {
        field: String,
        index: usize,
        expected: &'static str,
    },
    #[error("caption {caption_id} is empty")]
    EmptyCaption { caption_id: i64 },
    #[error("caption id {caption_id} appears more than once")]
    DuplicateCaption { caption_id: i64 },
    #[error("annotation {index} references unknown category {category_id}")]
    UnknownCategory { category_id: i64, index: usize },
    #[error("category id {category_id} appears more than once")]
    DuplicateCategory { category_id: i64 },
    #[error("category {category_id} has an empty supercategory")]
    EmptySupercategory { category_id: i64 },
    #[error("corpus file line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("corpus integrity violated: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub category_id: i64,
    pub name: String,
    pub supercategory: String,
}

/// Object categories in ascending id order; the position of a category in
/// that order is its design-matrix column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryTable {
    entries: Vec<Category>,
    column_index: BTreeMap<i64, usize>,
}

impl CategoryTable {
    pub fn new(mut entries: Vec<Category>) -> Result<Self, CorpusError> {
        entries.sort_by_key(|c| c.category_id);
        let mut column_index = BTreeMap::new();
        for (col, c) in entries.iter().enumerate() {
            if c.supercategory.is_empty() {
                return Err(CorpusError::EmptySupercategory {
                    category_id: c.category_id,
                });
            }
            if column_index.insert(c.category_id, col).is_some() {
                return Err(CorpusError::DuplicateCategory {
                    category_id: c.category_id,
                });
            }
        }
        Ok(Self {
            entries,
            column_index,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Category] {
        &self.entries
    }

    pub fn column_of(&self, category_id: i64) -> Option<usize> {
        self.column_index.get(&category_id).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    Human,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: i64,
    pub image_id: i64,
    pub text: String,
    pub source: CaptionSource,
}

/// Category presence bits, serialized as an array of 0/1 integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct Presence(Vec<bool>);

impl Presence {
    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn set(&mut self, col: usize) {
        self.0[col] = true;
    }

    pub fn get(&self, col: usize) -> bool {
        self.0[col]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }
}

impl From<Presence> for Vec<u8> {
    fn from(p: Presence) -> Self {
        p.0.into_iter().map(u8::from).collect()
    }
}

impl TryFrom<Vec<u8>> for Presence {
    type Error = String;

    fn try_from(v: Vec<u8>) -> Result<Self, String> {
        v.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("presence bit must be 0 or 1, got {other}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Presence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: i64,
    pub category_presence: Presence,
    /// Ascending.
    pub caption_ids: Vec<i64>,
}

/// Immutable joined dataset. Every caption's image exists and every image
/// has at least one caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    categories: CategoryTable,
    images: BTreeMap<i64, ImageRecord>,
    captions: BTreeMap<i64, CaptionRecord>,
}

/// What `build_corpus` dropped or defaulted along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestDiagnostics {
    pub images: usize,
    pub captions: usize,
    pub categories: usize,
    pub dropped_images_without_captions: usize,
    pub zero_category_images: Vec<i64>,
    /// caption count -> number of images with that many captions
    pub captions_per_image: BTreeMap<usize, usize>,
}

/// Joins captions with per-image category presence.
///
/// Images that only appear in `presence` are dropped and counted; images
/// that only appear in `captions` get an all-zero presence vector. Category
/// ids absent from `categories` are ignored.
pub fn build_corpus(
    captions: Vec<CaptionRecord>,
    categories: CategoryTable,
    presence: &PresenceMap,
) -> (Corpus, IngestDiagnostics) {
    let n_cat = categories.len();
    let mut images: BTreeMap<i64, ImageRecord> = BTreeMap::new();
    let mut caption_map = BTreeMap::new();

    for c in captions {
        images
            .entry(c.image_id)
            .or_insert_with(|| {
                let mut bits = Presence::zeros(n_cat);
                if let Some(set) = presence.get(&c.image_id) {
                    for cat in set {
                        if let Some(col) = categories.column_of(*cat) {
                            bits.set(col);
                        }
                    }
                }
                ImageRecord {
                    image_id: c.image_id,
                    category_presence: bits,
                    caption_ids: Vec::new(),
                }
            })
            .caption_ids
            .push(c.caption_id);
        caption_map.insert(c.caption_id, c);
    }
    for img in images.values_mut() {
        img.caption_ids.sort_unstable();
        img.caption_ids.dedup();
    }

    let mut diag = IngestDiagnostics {
        images: images.len(),
        captions: caption_map.len(),
        categories: n_cat,
        dropped_images_without_captions: presence
            .keys()
            .filter(|id| !images.contains_key(id))
            .count(),
        ..Default::default()
    };
    for img in images.values() {
        if img.category_presence.count_ones() == 0 {
            diag.zero_category_images.push(img.image_id);
        }
        *diag
            .captions_per_image
            .entry(img.caption_ids.len())
            .or_default() += 1;
    }

    let corpus = Corpus {
        categories,
        images,
        captions: caption_map,
    };
    (corpus, diag)
}

impl Corpus {
    /// Assembles a corpus from already-joined parts, checking referential
    /// integrity in both directions.
    pub fn from_parts(
        categories: CategoryTable,
        images: Vec<ImageRecord>,
        captions: Vec<CaptionRecord>,
    ) -> Result<Self, CorpusError> {
        let mut image_map = BTreeMap::new();
        for img in images {
            if img.category_presence.len() != categories.len() {
                return Err(CorpusError::Integrity(format!(
                    "image {} has {} presence bits for {} categories",
                    img.image_id,
                    img.category_presence.len(),
                    categories.len()
                )));
            }
            if img.caption_ids.is_empty() {
                return Err(CorpusError::Integrity(format!(
                    "image {} has no captions",
                    img.image_id
                )));
            }
            if img.caption_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CorpusError::Integrity(format!(
                    "image {} caption ids are not strictly ascending",
                    img.image_id
                )));
            }
            if image_map.insert(img.image_id, img).is_some() {
                return Err(CorpusError::Integrity("duplicate image id".into()));
            }
        }
        let mut caption_map = BTreeMap::new();
        for c in captions {
            let Some(img) = image_map.get(&c.image_id) else {
                return Err(CorpusError::Integrity(format!(
                    "caption {} references missing image {}",
                    c.caption_id, c.image_id
                )));
            };
            if img.caption_ids.binary_search(&c.caption_id).is_err() {
                return Err(CorpusError::Integrity(format!(
                    "image {} does not list caption {}",
                    c.image_id, c.caption_id
                )));
            }
            let id = c.caption_id;
            if caption_map.insert(id, c).is_some() {
                return Err(CorpusError::DuplicateCaption { caption_id: id });
            }
        }
        let listed: usize = image_map.values().map(|i| i.caption_ids.len()).sum();
        if listed != caption_map.len() {
            return Err(CorpusError::Integrity(format!(
                "images list {listed} captions but {} caption records exist",
                caption_map.len()
            )));
        }
        Ok(Self {
            categories,
            images: image_map,
            captions: caption_map,
        })
    }

    pub fn categories(&self) -> &CategoryTable {
        &self.categories
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = &ImageRecord> {
        self.images.values()
    }

    pub fn image(&self, image_id: i64) -> Option<&ImageRecord> {
        self.images.get(&image_id)
    }

    pub fn captions(&self) -> impl ExactSizeIterator<Item = &CaptionRecord> {
        self.captions.values()
    }

    pub fn caption(&self, caption_id: i64) -> Option<&CaptionRecord> {
        self.captions.get(&caption_id)
    }

    /// Source of the captions; an empty corpus counts as human.
    pub fn source(&self) -> CaptionSource {
        self.captions
            .values()
            .next()
            .map_or(CaptionSource::Human, |c| c.source)
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn caption_count(&self) -> usize {
        self.captions.len()
    }

    /// Captions of one image in ascending caption id order.
    pub fn captions_of<'a>(
        &'a self,
        image: &'a ImageRecord,
    ) -> impl Iterator<Item = &'a CaptionRecord> + 'a {
        image.caption_ids.iter().map(|id| &self.captions[id])
    }
}
