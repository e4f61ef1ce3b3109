//! Ordinary least squares with coefficient significance, and Pearson
//! correlation.

mod tdist;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::sentiment::{is_strong, SentimentRecord, StrongThreshold};

pub use tdist::{inc_beta, ln_beta, ln_gamma, t_sf};

/// Pivots at or below this fraction of the largest column norm mark a
/// column as linearly dependent on the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub const DEFAULT_ALPHA: f64 = 0.01;

pub const INTERCEPT: &str = "intercept";

#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("the selected subset contains no observations")]
    EmptySubset,
    #[error("{n} observations cannot support {params} parameters")]
    InsufficientObservations { n: usize, params: usize },
    #[error("degrees of freedom must be at least 1, got {0}")]
    InvalidDf(u64),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("caption {0} has no sentiment score")]
    MissingScore(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    StrongOnly,
}

/// Row-major regression design with a leading intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    col_labels: Vec<String>,
}

impl DesignMatrix {
    /// Prepends a column of ones to `predictors` (row-major, `labels.len()`
    /// columns).
    pub fn with_intercept(predictors: &[f64], labels: Vec<String>) -> Self {
        let k = labels.len();
        assert!(
            k == 0 || predictors.len().is_multiple_of(k),
            "ragged predictor matrix"
        );
        let rows = predictors.len().checked_div(k).unwrap_or(0);
        Self::from_rows(rows, predictors, labels)
    }

    fn from_rows(rows: usize, predictors: &[f64], labels: Vec<String>) -> Self {
        let k = labels.len();
        let cols = k + 1;
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            values.push(1.0);
            values.extend_from_slice(&predictors[r * k..(r + 1) * k]);
        }
        let mut col_labels = Vec::with_capacity(cols);
        col_labels.push(INTERCEPT.to_owned());
        col_labels.extend(labels);
        Self {
            rows,
            cols,
            values,
            col_labels,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }
}

/// One row per caption (ascending caption id) whose predictors are the
/// host image's category presence and whose response is the caption score.
pub fn build_design(
    corpus: &Corpus,
    scores: &BTreeMap<i64, SentimentRecord>,
    subset: Subset,
    th: StrongThreshold,
) -> Result<(DesignMatrix, Vec<f64>), RegressionError> {
    let k = corpus.categories().len();
    let mut predictors = Vec::new();
    let mut y = Vec::new();
    for cap in corpus.captions() {
        let score = scores
            .get(&cap.caption_id)
            .ok_or(RegressionError::MissingScore(cap.caption_id))?
            .score;
        if subset == Subset::StrongOnly && !is_strong(score, th) {
            continue;
        }
        let img = corpus
            .image(cap.image_id)
            .expect("corpus integrity: caption image exists");
        predictors.extend(
            img.category_presence
                .iter()
                .map(|b| if b { 1.0 } else { 0.0 }),
        );
        y.push(score);
    }
    if y.is_empty() {
        return Err(RegressionError::EmptySubset);
    }
    let labels = corpus.categories().names().map(str::to_owned).collect();
    let x = DesignMatrix::from_rows(y.len(), &predictors, labels);
    debug_assert_eq!(x.cols, k + 1);
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub labels: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub rss: f64,
    pub tss: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub dropped_cols: Vec<String>,
    /// The response was constant; `r_squared` is reported as 0.
    pub zero_variance_response: bool,
}

impl RegressionResult {
    /// Fitted values `X beta`.
    pub fn fitted(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.rows())
            .map(|r| x.row(r).iter().zip(&self.beta).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Least squares through a Householder QR that visits columns in index
/// order. A column whose remaining norm after the earlier reflections falls
/// to `RANK_TOLERANCE` times the largest column norm or below is dropped:
/// it gets `beta = se = 0`, `p = 1`, and is listed in `dropped_cols`.
/// Standard errors use `sigma^2 = RSS / (n - rank)`.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionResult, RegressionError> {
    let (n, p) = (x.rows, x.cols);
    if y.len() != n {
        return Err(RegressionError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..n).map(|r| x.get(r, c)).collect())
        .collect();
    let mut qty = y.to_vec();
    let max_norm = a.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let tol = RANK_TOLERANCE * max_norm;

    let mut kept: Vec<usize> = Vec::with_capacity(p);
    for j in 0..p {
        let r = kept.len();
        if r >= n {
            break;
        }
        let alpha_norm = norm(&a[j][r..]);
        if alpha_norm <= tol {
            continue;
        }
        let alpha = if a[j][r] >= 0.0 {
            -alpha_norm
        } else {
            alpha_norm
        };
        let mut v = a[j][r..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|e| e * e).sum();
        let reflect = |col: &mut [f64]| {
            let w = 2.0 * dot(&v, &col[r..]) / vv;
            for (c, vi) in col[r..].iter_mut().zip(&v) {
                *c -= w * vi;
            }
        };
        for col in a.iter_mut().skip(j + 1) {
            reflect(col);
        }
        reflect(&mut qty);
        a[j][r] = alpha;
        a[j][r + 1..].iter_mut().for_each(|e| *e = 0.0);
        kept.push(j);
    }

    let rank = kept.len();
    if n <= rank {
        return Err(RegressionError::InsufficientObservations { n, params: rank });
    }

    // R restricted to kept columns: r_mat[i][k] = a[kept[k]][i]
    let rk = |i: usize, k: usize| a[kept[k]][i];
    let mut coef = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for k in i + 1..rank {
            s -= rk(i, k) * coef[k];
        }
        coef[i] = s / rk(i, i);
    }
    // R^-1, upper triangular, column by column
    let mut rinv = vec![vec![0.0; rank]; rank];
    for c in 0..rank {
        rinv[c][c] = 1.0 / rk(c, c);
        for i in (0..c).rev() {
            let mut s = 0.0;
            for k in i + 1..=c {
                s += rk(i, k) * rinv[k][c];
            }
            rinv[i][c] = -s / rk(i, i);
        }
    }

    let mut beta = vec![0.0; p];
    for (k, &j) in kept.iter().enumerate() {
        beta[j] = coef[k];
    }
    let rss: f64 = (0..n)
        .map(|r| {
            let e = y[r] - dot(x.row(r), &beta);
            e * e
        })
        .sum();
    let df_resid = n - rank;
    let sigma2 = rss / df_resid as f64;

    let mean = y.iter().sum::<f64>() / n as f64;
    let zero_variance_response = y.iter().all(|v| *v == y[0]);
    let tss = if zero_variance_response {
        0.0
    } else {
        y.iter().map(|v| (v - mean) * (v - mean)).sum()
    };
    let (r_squared, adj_r_squared) = if zero_variance_response {
        (0.0, 0.0)
    } else {
        let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
        (r2, 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid as f64)
    };

    let mut se = vec![0.0; p];
    let mut t_stat = vec![0.0; p];
    let mut p_value = vec![1.0; p];
    for (k, &j) in kept.iter().enumerate() {
        let diag: f64 = rinv[k][k..].iter().map(|e| e * e).sum();
        se[j] = (sigma2 * diag).sqrt();
        t_stat[j] = if se[j] > 0.0 {
            beta[j] / se[j]
        } else if beta[j] == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(beta[j])
        };
        p_value[j] = t_sf(t_stat[j], df_resid as u64)?;
    }

    let dropped_cols = (0..p)
        .filter(|j| !kept.contains(j))
        .map(|j| x.col_labels[j].clone())
        .collect();
    Ok(RegressionResult {
        labels: x.col_labels.clone(),
        beta,
        se,
        t_stat,
        p_value,
        r_squared,
        adj_r_squared,
        rss,
        tss,
        n_obs: n,
        df_resid,
        dropped_cols,
        zero_variance_response,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // scaled to avoid overflow on large inputs
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceFlag {
    pub label: String,
    pub coefficient: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// One flag per non-intercept column, in column order; significant means
/// `p < alpha` strictly.
pub fn significance_table(result: &RegressionResult, alpha: f64) -> Vec<SignificanceFlag> {
    (1..result.labels.len())
        .map(|j| SignificanceFlag {
            label: result.labels[j].clone(),
            coefficient: result.beta[j],
            p_value: result.p_value[j],
            significant: result.p_value[j] < alpha,
        })
        .collect()
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, RegressionError> {
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(RegressionError::TooFewObservations(n));
    }
    if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return Err(RegressionError::ZeroVariance);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        build_corpus, CaptionRecord, CaptionSource, Category, CategoryTable, PresenceMap,
    };
    use crate::sentiment::ConfidenceTriple;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn design(cols: &[&[f64]]) -> DesignMatrix {
        let n = cols[0].len();
        let k = cols.len();
        let mut flat = Vec::new();
        for r in 0..n {
            for c in cols {
                flat.push(c[r]);
            }
        }
        DesignMatrix::with_intercept(&flat, (0..k).map(|i| format!("x{i}")).collect())
    }

    #[test]
    fn exact_line() {
        let x = design(&[&[0.0, 1.0, 2.0]]);
        let fit = ols_fit(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert!((fit.beta[1] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-24);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.df_resid, 1);
    }

    #[test]
    fn constant_response_is_flagged() {
        let x = design(&[&[0.0, 1.0, 2.0, 5.0]]);
        let fit = ols_fit(&x, &[0.3; 4]).unwrap();
        assert!(fit.zero_variance_response);
        assert_eq!(fit.r_squared, 0.0);
        assert!((fit.beta[0] - 0.3).abs() < 1e-14);
        assert!(fit.beta[1].abs() < 1e-14);
    }

    #[test]
    fn duplicate_column_is_dropped_last_come() {
        let c = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let other = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let x = design(&[&c, &other, &c]);
        let y = [0.1, 0.5, -0.2, 0.4, 0.9, 0.0];
        let fit = ols_fit(&x, &y).unwrap();
        assert_eq!(fit.dropped_cols, vec!["x2".to_string()]);
        assert_eq!(fit.beta[3], 0.0);
        assert_eq!(fit.se[3], 0.0);
        assert_eq!(fit.p_value[3], 1.0);
        assert_eq!(fit.df_resid, 6 - 3);

        let reduced = ols_fit(&design(&[&c, &other]), &y).unwrap();
        for (a, b) in fit
            .fitted(&x)
            .iter()
            .zip(reduced.fitted(&design(&[&c, &other])))
        {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((fit.r_squared - reduced.r_squared).abs() < 1e-12);
    }

    #[test]
    fn all_zero_category_column_is_dropped() {
        let x = design(&[&[0.0; 5], &[1.0, 0.0, 1.0, 0.0, 0.0]]);
        let fit = ols_fit(&x, &[1.0, 2.0, 1.5, 2.5, 2.0]).unwrap();
        assert_eq!(fit.dropped_cols, vec!["x0".to_string()]);
    }

    #[test]
    fn insufficient_observations() {
        let x = design(&[&[0.0, 1.0]]);
        assert!(matches!(
            ols_fit(&x, &[1.0, 2.0]),
            Err(RegressionError::InsufficientObservations { n: 2, params: 2 })
        ));
    }

    #[test]
    fn significance_flags() {
        let result = RegressionResult {
            labels: vec!["intercept".into(), "a".into(), "b".into(), "c".into()],
            beta: vec![0.1, 0.4, 0.2, 0.0],
            se: vec![0.0; 4],
            t_stat: vec![0.0; 4],
            p_value: vec![0.0, 0.001, 0.5, 1.0],
            r_squared: 0.0,
            adj_r_squared: 0.0,
            rss: 0.0,
            tss: 0.0,
            n_obs: 10,
            df_resid: 7,
            dropped_cols: vec!["c".into()],
            zero_variance_response: false,
        };
        let flags = significance_table(&result, 0.01);
        let got: Vec<bool> = flags.iter().map(|f| f.significant).collect();
        assert_eq!(got, vec![true, false, false]);
        assert_eq!(flags[2].coefficient, 0.0);
        // strict inequality
        let mut edge = result.clone();
        edge.p_value[1] = 0.01;
        assert!(!significance_table(&edge, 0.01)[0].significant);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson_r(&[1.0, 1.0], &[1.0, 2.0]),
            Err(RegressionError::ZeroVariance)
        ));
        assert!(matches!(
            pearson_r(&[1.0], &[1.0, 2.0]),
            Err(RegressionError::LengthMismatch { .. })
        ));
    }

    fn corpus_with_scores(
        scores: &[(i64, i64, f64)],
        presence: PresenceMap,
        n_cat: i64,
    ) -> (Corpus, BTreeMap<i64, SentimentRecord>) {
        let table = CategoryTable::new(
            (1..=n_cat)
                .map(|i| Category {
                    category_id: i,
                    name: format!("c{i}"),
                    supercategory: "s".into(),
                })
                .collect(),
        )
        .unwrap();
        let caps = scores
            .iter()
            .map(|&(id, img, _)| CaptionRecord {
                caption_id: id,
                image_id: img,
                text: "t".into(),
                source: CaptionSource::Human,
            })
            .collect();
        let (corpus, _) = build_corpus(caps, table, &presence);
        let recs = scores
            .iter()
            .map(|&(id, _, s)| {
                let t = ConfidenceTriple::new(s.min(0.0).abs(), 1.0 - s.abs(), s.max(0.0)).unwrap();
                (id, SentimentRecord::new(id, t, "test"))
            })
            .collect();
        (corpus, recs)
    }

    #[test]
    fn design_rows_are_captions() {
        let presence = PresenceMap::from([(1, BTreeSet::from([1]))]);
        let (corpus, scores) = corpus_with_scores(&[(1, 1, 0.2), (2, 1, -0.7)], presence, 2);
        let (x, y) =
            build_design(&corpus, &scores, Subset::All, StrongThreshold::default()).unwrap();
        assert_eq!(x.row(0), &[1.0, 1.0, 0.0]);
        assert_eq!(x.row(1), &[1.0, 1.0, 0.0]);
        assert_eq!(y, vec![0.2, -0.7]);
        assert_eq!(x.col_labels(), &["intercept", "c1", "c2"]);

        let (x, y) = build_design(
            &corpus,
            &scores,
            Subset::StrongOnly,
            StrongThreshold::default(),
        )
        .unwrap();
        assert_eq!(x.rows(), 1);
        assert_eq!(y, vec![-0.7]);
    }

    #[test]
    fn neutral_corpus_has_no_strong_subset() {
        let (corpus, scores) =
            corpus_with_scores(&[(1, 1, 0.0), (2, 2, 0.5)], PresenceMap::new(), 2);
        assert!(matches!(
            build_design(
                &corpus,
                &scores,
                Subset::StrongOnly,
                StrongThreshold::default()
            ),
            Err(RegressionError::EmptySubset)
        ));
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..50),
            a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3) && y.iter().any(|v| (v - y[0]).abs() > 1e-3));
            let r = pearson_r(&x, &y).unwrap();
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let yt: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            prop_assert!((pearson_r(&xt, &yt).unwrap() - r).abs() < 1e-12);
        }

        #[test]
        fn residuals_orthogonal_to_design(
            rows in prop::collection::vec((prop::collection::vec(0u8..2, 4), -1.0f64..1.0), 12..60),
        ) {
            let flat: Vec<f64> = rows.iter().flat_map(|(r, _)| r.iter().map(|&b| f64::from(b))).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let x = DesignMatrix::with_intercept(&flat, (0..4).map(|i| format!("c{i}")).collect());
            let fit = ols_fit(&x, &y).unwrap();
            let fitted = fit.fitted(&x);
            let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            let xty_norm = (0..x.cols()).map(|c| {
                let s: f64 = (0..x.rows()).map(|r| x.get(r, c) * y[r]).sum();
                s * s
            }).sum::<f64>().sqrt();
            for c in 0..x.cols() {
                if fit.dropped_cols.contains(&x.col_labels()[c]) {
                    continue;
                }
                let g: f64 = (0..x.rows()).map(|r| x.get(r, c) * resid[r]).sum();
                prop_assert!(g.abs() <= 1e-8 * xty_norm.max(1e-300));
            }
            if !fit.zero_variance_response {
                prop_assert!((0.0..=1.0).contains(&fit.r_squared));
            }
        }

        #[test]
        fn duplicated_column_keeps_predictions(
            rows in prop::collection::vec((prop::collection::vec(0u8..2, 3), -1.0f64..1.0), 10..40),
            dup in 0usize..3,
        ) {
            let k = 3;
            let flat: Vec<f64> = rows.iter().flat_map(|(r, _)| r.iter().map(|&b| f64::from(b))).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let base = DesignMatrix::with_intercept(&flat, (0..k).map(|i| format!("c{i}")).collect());
            let widened: Vec<f64> = rows.iter().flat_map(|(r, _)| {
                let mut v: Vec<f64> = r.iter().map(|&b| f64::from(b)).collect();
                v.push(v[dup]);
                v
            }).collect();
            let wide = DesignMatrix::with_intercept(&widened, (0..=k).map(|i| format!("c{i}")).collect());
            let (Ok(a), Ok(b)) = (ols_fit(&base, &y), ols_fit(&wide, &y)) else {
                return Ok(());
            };
            let dup_label = format!("c{}", k);
            prop_assert!(b.dropped_cols.contains(&dup_label));
            for (p, q) in a.fitted(&base).iter().zip(b.fitted(&wide)) {
                prop_assert!((p - q).abs() < 1e-10);
            }
        }

        #[test]
        fn t_sf_monotone(df in 1u64..200, t1 in 0.0f64..20.0, dt in 1e-3f64..5.0) {
            let a = t_sf(t1, df).unwrap();
            let b = t_sf(t1 + dt, df).unwrap();
            prop_assert!(b < a || (a == 0.0 && b == 0.0));
            prop_assert_eq!(t_sf(-t1, df).unwrap(), a);
        }
    }
}
