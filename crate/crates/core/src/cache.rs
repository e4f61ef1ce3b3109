//! Location of cached provider outputs.

use std::path::{Path, PathBuf};

use crate::corpus::CaptionSource;

/// Directory of NDJSON files keyed by output kind, provider id, provider
/// version and caption source. Entries inside a file are keyed by caption id.
#[derive(Debug, Clone)]
pub struct ProviderCache {
    dir: PathBuf,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

impl ProviderCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, kind: &str, id: &str, version: &str, source: CaptionSource) -> PathBuf {
        let source = match source {
            CaptionSource::Human => "human",
            CaptionSource::Model => "model",
        };
        self.dir.join(format!(
            "{kind}-{}-{}-{source}.ndjson",
            sanitize(id),
            sanitize(version)
        ))
    }

    pub fn ensure_dir(&self) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)
    }
}

/// How much of a provider stage was served from cache.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ScoringStats {
    pub cached: usize,
    pub computed: usize,
    pub provider_calls: usize,
}
