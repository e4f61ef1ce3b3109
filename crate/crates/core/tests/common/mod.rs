#![allow(dead_code)]

use std::path::{Path, PathBuf};

use caption_audit::cli::{Options, RunConfig};

pub fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

/// Settings for the mini fixture with human and model captions, writing to `out`.
pub fn mini_options(out: &Path) -> Options {
    let m = mini();
    Options {
        captions: Some(m.join("captions.json")),
        instances: Some(m.join("instances.json")),
        model_captions: Some(m.join("model_captions.json")),
        out: Some(out.to_path_buf()),
        jobs: Some(2),
        ..Options::default()
    }
}

pub fn config(options: Options) -> RunConfig {
    RunConfig::resolve(options, Options::default(), None).expect("valid settings")
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

pub const REPORT_FILES: &[&str] = &[
    "report.json",
    "coefficients.csv",
    "coefficients_all.csv",
    "coefficients_strong_model.csv",
    "hist_sentiment_human.csv",
    "hist_sentiment_model.csv",
    "hist_variability.csv",
    "per_image.csv",
];
