//! Byte-stable report files: sorted JSON keys, floats rounded to nine
//! significant digits, LF line endings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::{AuditReport, Histogram, RegressionSummary, ReportError};

/// Rounds to nine significant digits. Non-finite values pass through and
/// negative zero becomes zero.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    if v == 0.0 {
        return 0.0;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Shortest representation of the rounded value; `inf`, `-inf` or `nan`
/// for non-finite input.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    serde_json::Number::from_f64(round_sig(v))
        .expect("finite")
        .to_string()
}

fn canonicalize(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize),
        Value::Object(map) => map.values_mut().for_each(canonicalize),
        _ => {}
    }
}

/// The canonical JSON text of any report value. Non-finite floats become
/// `null`.
pub fn report_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    canonicalize(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// One row of `per_image.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerImageRow {
    pub image_id: i64,
    pub n_captions: usize,
    pub mean_score: f64,
    pub sd_score: f64,
    pub strong_captions: usize,
    /// None for single-caption images.
    pub variability: Option<f64>,
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(&path, bytes).map_err(|source| ReportError::IoFailure { path, source })
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn histogram_csv(h: &Histogram) -> Vec<u8> {
    csv_bytes(
        &["bin_lo", "bin_hi", "count"],
        (0..h.n_bins).map(|b| {
            vec![
                format_float(h.edge(b)),
                format_float(h.edge(b + 1)),
                h.counts[b].to_string(),
            ]
        }),
    )
}

fn coefficients_csv(summary: &RegressionSummary) -> Vec<u8> {
    let rows = summary.fit.iter().flat_map(|fit| {
        (0..fit.labels.len()).map(move |j| {
            let significant = j > 0
                && summary
                    .significance
                    .get(j - 1)
                    .is_some_and(|f| f.significant);
            vec![
                fit.labels[j].clone(),
                format_float(fit.beta[j]),
                format_float(fit.se[j]),
                format_float(fit.t_stat[j]),
                format_float(fit.p_value[j]),
                significant.to_string(),
            ]
        })
    });
    csv_bytes(&["label", "beta", "se", "t", "p", "significant"], rows)
}

/// Writes the report file set into `dir` and returns the written paths in
/// a fixed order:
///
/// * `report.json`
/// * `coefficients.csv` (strong human captions), `coefficients_all.csv`,
///   and `coefficients_strong_model.csv` when model captions were audited
/// * `hist_sentiment_human.csv`, `hist_variability.csv`, and
///   `hist_sentiment_model.csv` when model captions were audited
/// * `per_image.csv`
pub fn emit_report(
    report: &AuditReport,
    per_image: &[PerImageRow],
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::IoFailure {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("report.json", report_json(report).into_bytes()),
        (
            "coefficients.csv",
            coefficients_csv(&report.regressions.strong_human),
        ),
        (
            "coefficients_all.csv",
            coefficients_csv(&report.regressions.all),
        ),
    ];
    if let Some(m) = &report.regressions.strong_model {
        files.push(("coefficients_strong_model.csv", coefficients_csv(m)));
    }
    files.push((
        "hist_sentiment_human.csv",
        histogram_csv(&report.histograms.sentiment_human),
    ));
    if let Some(h) = &report.histograms.sentiment_model {
        files.push(("hist_sentiment_model.csv", histogram_csv(h)));
    }
    files.push((
        "hist_variability.csv",
        histogram_csv(&report.histograms.variability),
    ));
    files.push((
        "per_image.csv",
        csv_bytes(
            &[
                "image_id",
                "n_captions",
                "mean_score",
                "sd_score",
                "strong_captions",
                "variability",
            ],
            per_image.iter().map(|r| {
                vec![
                    r.image_id.to_string(),
                    r.n_captions.to_string(),
                    format_float(r.mean_score),
                    format_float(r.sd_score),
                    r.strong_captions.to_string(),
                    r.variability.map(format_float).unwrap_or_default(),
                ]
            }),
        ),
    ));

    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        write(path.clone(), &bytes)?;
        written.push(path);
    }
    Ok(written)
}
