#![allow(dead_code)]

//! Reference computations that share no code with the library.

use std::f64::consts::FRAC_PI_2;

/// Least squares through the normal equations, solved with Gauss–Jordan
/// elimination and partial pivoting. `x` is row-major with `p` columns.
pub struct NormalEquationsFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> NormalEquationsFit {
    let n = x.len();
    let p = x[0].len();
    // [XᵀX | I | Xᵀy]
    let width = 2 * p + 1;
    let mut m = vec![vec![0.0; width]; p];
    for (r, row) in m.iter_mut().enumerate() {
        for c in 0..p {
            row[c] = (0..n).map(|i| x[i][r] * x[i][c]).sum();
        }
        row[p + r] = 1.0;
        row[2 * p] = (0..n).map(|i| x[i][r] * y[i]).sum();
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let d = m[col][col];
        assert!(d.abs() > 1e-12, "singular normal equations");
        for v in m[col].iter_mut() {
            *v /= d;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|r| m[r][2 * p]).collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|c| x[i][c] * beta[c]).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let se: Vec<f64> = (0..p).map(|j| (sigma2 * m[j][p + j]).sqrt()).collect();
    let t: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = t.iter().map(|&tv| t_two_sided(tv, df as u64)).collect();
    NormalEquationsFit { beta, se, t, p: pv }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: (f64, f64, f64),
    eps: f64,
    depth: u32,
) -> f64 {
    let (m, fm, s) = whole;
    let left = simpson(f, a, fa, m, fm);
    let right = simpson(f, m, fm, b, fb);
    let delta = left.2 + right.2 - s;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left.2 + right.2 + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, left, eps / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let whole = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, whole, eps, 60)
}

/// Two-sided Student-t tail probability P(|T| > |t|) by quadrature.
///
/// Substituting x = √ν·tan θ turns the density into cos^(ν−1) θ on
/// [0, π/2], so the tail is a ratio of two finite integrals and needs no
/// gamma function.
pub fn t_two_sided(t: f64, df: u64) -> f64 {
    let nu = df as f64;
    let exponent = (df - 1) as i32;
    let g = move |th: f64| th.cos().powi(exponent);
    let theta0 = (t.abs() / nu.sqrt()).atan();
    let total = integrate(&g, 0.0, FRAC_PI_2, 1e-15);
    integrate(&g, theta0, FRAC_PI_2, 1e-15) / total
}

/// Root mean squared cosine similarity by a plain double loop over ordered
/// pairs i ≠ j.
pub fn variability_brute_force(vectors: &[Vec<f64>]) -> f64 {
    let n = vectors.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&vectors[i], &vectors[j]);
            let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
            let na = a.iter().map(|u| u * u).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let c = dot / (na * nb);
            total += c * c;
        }
    }
    (total / (n * (n - 1)) as f64).sqrt()
}
