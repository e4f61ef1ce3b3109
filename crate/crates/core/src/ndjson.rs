//! Line-oriented JSON helpers used by the corpus, score and embedding files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum NdjsonError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Parses one record per non-blank line. Line numbers in errors are 1-based.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, NdjsonError> {
    let file = File::open(path).map_err(|source| NdjsonError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(BufReader::new(file), path)
}

pub fn parse_records<T: DeserializeOwned, R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<Vec<T>, NdjsonError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| NdjsonError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| NdjsonError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes `records` as LF-terminated JSON lines, replacing `path` atomically
/// through a sibling temporary file.
pub fn write_records<'a, T, I>(path: &Path, records: I) -> Result<(), NdjsonError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let io_err = |source| NdjsonError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("ndjson.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err)?);
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}
