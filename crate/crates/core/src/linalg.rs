//! Thin helpers over nalgebra used by several estimators.

use nalgebra::{DMatrix, DVector};

/// Leading left singular vector and singular value.
pub(crate) fn top_left_singular(m: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let svd = m.clone().svd(true, false);
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
    let u = svd.u.expect("left singular vectors requested");
    (u.column(idx).into_owned(), sigma)
}

/// Singular values and left singular vectors, sorted by decreasing singular value.
pub(crate) fn sorted_left_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<_> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    (values, DMatrix::from_columns(&cols))
}

pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse of a symmetric positive definite matrix, `None` when the Cholesky
/// factorization fails or the result is not finite.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().cholesky()?.inverse();
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// Solves the normal equations `g β = c` for symmetric positive definite `g`.
pub(crate) fn spd_solve(g: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let sol = g.clone().cholesky()?.solve(c);
    sol.iter().all(|x| x.is_finite()).then_some(sol)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
/// Returns the sign applied.
pub(crate) fn fix_sign(v: &mut [f64]) -> f64 {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_rule_prefers_first_on_ties() {
        let mut v = vec![-0.5, 0.5];
        assert_eq!(fix_sign(&mut v), -1.0);
        assert_eq!(v, vec![0.5, -0.5]);
        let mut w = vec![0.1, -0.9];
        fix_sign(&mut w);
        assert_eq!(w, vec![-0.1, 0.9]);
    }

    #[test]
    fn sorted_svd_is_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (s, u) = sorted_left_svd(&m);
        assert!((s[0] - 5.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12);
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
