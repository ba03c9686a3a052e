//! Brute-force oracles shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

/// Gaussian elimination with partial pivoting on the normal equations.
pub fn solve_normal(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let w = x[0].len();
    let mut a = vec![vec![0.0; w + 1]; w];
    for (row, &t) in x.iter().zip(y) {
        for i in 0..w {
            for j in 0..w {
                a[i][j] += row[i] * row[j];
            }
            a[i][w] += row[i] * t;
        }
    }
    for c in 0..w {
        let piv = (c..w).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for i in 0..w {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=w {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..w).map(|i| a[i][w] / a[i][i]).collect()
}

pub fn lagged(y: &[f64], p: usize, t: usize) -> Vec<f64> {
    (1..=p).map(|l| y[t - l]).collect()
}

/// Residual sum of squares of OLS on the sample points in `idx`.
pub fn ols_ssr(y: &[f64], p: usize, idx: &[usize]) -> f64 {
    let x: Vec<Vec<f64>> = idx.iter().map(|&t| lagged(y, p, t)).collect();
    let tgt: Vec<f64> = idx.iter().map(|&t| y[t]).collect();
    let b = solve_normal(&x, &tgt);
    x.iter()
        .zip(&tgt)
        .map(|(row, t)| (t - row.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()).powi(2))
        .sum()
}

/// Minimum SSR over every admissible threshold set, recomputing each fit.
/// The sample starts at the first `t >= p` with an observed `z[t]`.
pub fn naive_min_ssr(y: &[f64], z: &[f64], p: usize, regimes: usize, trim: f64) -> f64 {
    let first = (p..y.len()).find(|&t| z[t].is_finite()).unwrap();
    let sample: Vec<usize> = (first..y.len()).collect();
    let n = sample.len();
    let floor = (p + 2).max((trim * n as f64).ceil() as usize);
    let mut cands: Vec<f64> = sample.iter().map(|&t| z[t]).collect();
    cands.sort_by(f64::total_cmp);
    let split = |cuts: &[f64]| -> Option<f64> {
        let mut parts = vec![Vec::new(); cuts.len() + 1];
        for &t in &sample {
            parts[cuts.iter().filter(|&&c| c < z[t]).count()].push(t);
        }
        if parts.iter().any(|g| g.len() < floor) {
            return None;
        }
        Some(parts.iter().map(|g| ols_ssr(y, p, g)).sum())
    };
    let mut best = f64::INFINITY;
    match regimes {
        1 => best = split(&[]).unwrap(),
        2 => {
            for &c in &cands {
                if let Some(s) = split(&[c]) {
                    best = best.min(s);
                }
            }
        }
        _ => {
            for (i, &a) in cands.iter().enumerate() {
                for &b in &cands[i + 1..] {
                    if let Some(s) = split(&[a, b]) {
                        best = best.min(s);
                    }
                }
            }
        }
    }
    best
}
