//! COCO 2017 caption and instance annotation files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::{Map, Value};

use super::{CaptionRecord, CaptionSource, Category, CategoryTable, CorpusError};

/// image_id -> set of category ids with at least one instance.
pub type PresenceMap = BTreeMap<i64, BTreeSet<i64>>;

fn load_json(path: &Path) -> Result<Value, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(&bytes)
}

pub(crate) fn parse_json(bytes: &[u8]) -> Result<Value, CorpusError> {
    serde_json::from_slice(bytes).map_err(|e| CorpusError::MalformedJson {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

// serde_json reports 1-based line and byte column.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start = if line <= 1 {
        0
    } else {
        bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(line - 2)
            .map_or(bytes.len(), |(i, _)| i + 1)
    };
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn top_array<'a>(root: &'a Value, key: &str) -> Result<&'a Vec<Value>, CorpusError> {
    match root.get(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(CorpusError::InvalidField {
            field: key.into(),
            index: 0,
            expected: "an array",
        }),
        None => Err(CorpusError::MissingKey {
            field: key.into(),
            index: None,
        }),
    }
}

fn entry(v: &Value, index: usize) -> Result<&Map<String, Value>, CorpusError> {
    v.as_object().ok_or(CorpusError::InvalidField {
        field: "<entry>".into(),
        index,
        expected: "an object",
    })
}

fn field<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    index: usize,
) -> Result<&'a Value, CorpusError> {
    obj.get(key).ok_or_else(|| CorpusError::MissingKey {
        field: key.into(),
        index: Some(index),
    })
}

fn int_field(obj: &Map<String, Value>, key: &str, index: usize) -> Result<i64, CorpusError> {
    field(obj, key, index)?
        .as_i64()
        .ok_or_else(|| CorpusError::InvalidField {
            field: key.into(),
            index,
            expected: "an integer",
        })
}

fn str_field<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    index: usize,
) -> Result<&'a str, CorpusError> {
    field(obj, key, index)?
        .as_str()
        .ok_or_else(|| CorpusError::InvalidField {
            field: key.into(),
            index,
            expected: "a string",
        })
}

/// Reads a caption annotation file; every record is tagged as human-written.
pub fn parse_captions(path: &Path) -> Result<Vec<CaptionRecord>, CorpusError> {
    parse_captions_with_source(path, CaptionSource::Human)
}

pub fn parse_captions_with_source(
    path: &Path,
    source: CaptionSource,
) -> Result<Vec<CaptionRecord>, CorpusError> {
    captions_from_value(&load_json(path)?, source)
}

pub(crate) fn captions_from_value(
    root: &Value,
    source: CaptionSource,
) -> Result<Vec<CaptionRecord>, CorpusError> {
    let annotations = top_array(root, "annotations")?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(annotations.len());
    for (index, v) in annotations.iter().enumerate() {
        let obj = entry(v, index)?;
        let caption_id = int_field(obj, "id", index)?;
        let image_id = int_field(obj, "image_id", index)?;
        let text = str_field(obj, "caption", index)?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyCaption { caption_id });
        }
        if !seen.insert(caption_id) {
            return Err(CorpusError::DuplicateCaption { caption_id });
        }
        out.push(CaptionRecord {
            caption_id,
            image_id,
            text: text.to_owned(),
            source,
        });
    }
    Ok(out)
}

/// Reads an instance annotation file, collapsing instance multiplicity to
/// per-image category presence.
pub fn parse_instances(path: &Path) -> Result<(CategoryTable, PresenceMap), CorpusError> {
    instances_from_value(&load_json(path)?)
}

pub(crate) fn instances_from_value(
    root: &Value,
) -> Result<(CategoryTable, PresenceMap), CorpusError> {
    let mut categories = Vec::new();
    for (index, v) in top_array(root, "categories")?.iter().enumerate() {
        let obj = entry(v, index)?;
        categories.push(Category {
            category_id: int_field(obj, "id", index)?,
            name: str_field(obj, "name", index)?.to_owned(),
            supercategory: str_field(obj, "supercategory", index)?.to_owned(),
        });
    }
    let table = CategoryTable::new(categories)?;

    let mut presence = PresenceMap::new();
    for (index, v) in top_array(root, "annotations")?.iter().enumerate() {
        let obj = entry(v, index)?;
        let image_id = int_field(obj, "image_id", index)?;
        let category_id = int_field(obj, "category_id", index)?;
        if table.column_of(category_id).is_none() {
            return Err(CorpusError::UnknownCategory { category_id, index });
        }
        presence.entry(image_id).or_default().insert(category_id);
    }
    Ok((table, presence))
}
