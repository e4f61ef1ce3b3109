//! Corpus persistence as tagged NDJSON: all categories, then images, then
//! captions, each block in ascending id order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CaptionRecord, Category, CategoryTable, Corpus, CorpusError, ImageRecord};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Line {
    Category(Category),
    Image(ImageRecord),
    Caption(CaptionRecord),
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    let mut emit = |line: &Line| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n")
    };
    for c in corpus.categories.entries() {
        emit(&Line::Category(c.clone()))?;
    }
    for img in corpus.images() {
        emit(&Line::Image(img.clone()))?;
    }
    for cap in corpus.captions() {
        emit(&Line::Caption(cap.clone()))?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Corpus, CorpusError> {
    let mut categories = Vec::new();
    let mut images = Vec::new();
    let mut captions = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        match parsed {
            Line::Category(c) => categories.push(c),
            Line::Image(i) => images.push(i),
            Line::Caption(c) => captions.push(c),
        }
    }
    Corpus::from_parts(CategoryTable::new(categories)?, images, captions)
}
