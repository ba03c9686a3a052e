//! First-stage estimation of the CP-form tensor factor model
//!
//! ```text
//! X_t = Σ_j λ_j f_jt u_j1 ∘ u_j2 ∘ … ∘ u_jK + E_t
//! ```
//!
//! Loadings are estimated from the lag-`h` auto-moment matrix `Σ̂_h`. In the
//! noiseless model its leading `r`-dimensional row and column spaces are
//! spanned by the vectorized rank-one loadings, so the default refinement
//! runs alternating least squares on the CP structure of those singular
//! vectors. Starting points come from a simultaneous diagonalization of the
//! same subspace, from composite PCA (each leading singular vector reduced
//! to its best rank-one tensor) and optionally from random draws; the
//! candidate whose loadings capture most of `Σ̂_h` wins.
//!
//! The alternative [`Refinement::Iso`] sweeps factor by factor and mode by
//! mode, contracting every other mode against the dual basis
//! `U_k (U_kᵀ U_k)⁻¹` and taking the leading singular vector of the
//! `d_k × d_k` matrix that remains.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, fix_sign, normalize, sorted_left_svd, spd_inverse, top_left_singular};
use crate::tar::ExogSeries;
use crate::tensor::{outer_product, DenseTensor, TensorSeries};

/// Sample lag-`h` cross moment `(1/(T-h)) Σ_t vec(X_{t-h}) vec(X_t)ᵀ`.
///
/// Stored as a `d × d` matrix whose column-major layout coincides with the
/// colexicographic layout of the order-`2K` tensor of shape `(d_1..d_K, d_1..d_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoMoment {
    pub lag: usize,
    pub shape: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl AutoMoment {
    pub fn as_tensor(&self) -> DenseTensor {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&self.shape);
        DenseTensor::new(shape, self.matrix.as_slice().to_vec())
            .expect("auto-moment layout matches doubled shape")
    }
}

pub fn auto_moment(series: &TensorSeries, h: usize) -> Result<AutoMoment> {
    let n = series.len();
    if h == 0 {
        return Err(Error::InvalidArgument("auto-moment lag must be at least 1".into()));
    }
    if h >= n {
        return Err(Error::InsufficientData(format!(
            "lag {h} needs more than {h} observations, got {n}"
        )));
    }
    let d = series.dim();
    let m = n - h;
    let lagged = DMatrix::from_fn(d, m, |a, t| series.items()[t].data()[a]);
    let current = DMatrix::from_fn(d, m, |a, t| series.items()[t + h].data()[a]);
    let matrix = (lagged * current.transpose()) / m as f64;
    Ok(AutoMoment {
        lag: h,
        shape: series.shape().to_vec(),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    pub shape: Vec<usize>,
    /// `loadings[j][k]` is the unit-norm mode-`k` loading of factor `j`.
    pub loadings: Vec<Vec<Vec<f64>>>,
    /// Root mean square of the extracted factor series at fit time.
    /// Diagnostic only; factors are reported with the strength absorbed.
    pub strengths: Vec<f64>,
}

impl CpModel {
    pub fn rank(&self) -> usize {
        self.loadings.len()
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Loadings of one mode as a `d_k × r` matrix.
    pub fn mode_matrix(&self, k: usize) -> DMatrix<f64> {
        let cols: Vec<_> = self
            .loadings
            .iter()
            .map(|lj| nalgebra::DVector::from_column_slice(&lj[k]))
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// Columns of `U_k (U_kᵀ U_k)⁻¹` for every mode, as `[j][k]` vectors.
    pub fn dual_loadings(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        let r = self.rank();
        let mut out = vec![vec![Vec::new(); self.order()]; r];
        for k in 0..self.order() {
            let u = self.mode_matrix(k);
            let v = dual_basis(&u).ok_or_else(|| {
                Error::RankDeficient(format!("mode-{k} loadings are collinear"))
            })?;
            for (j, row) in out.iter_mut().enumerate() {
                row[k] = v.column(j).iter().copied().collect();
            }
        }
        Ok(out)
    }

    fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!(
                "model shape {:?} vs series shape {shape:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// How the initial loadings are improved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Alternating least squares on the CP structure of the leading
    /// `r`-dimensional row and column spaces of the auto-moment matrix.
    /// Exact whenever those spaces are spanned by the rank-one loadings.
    #[default]
    Subspace,
    /// Per-factor, per-mode power updates on the auto-moment tensor with
    /// the other modes contracted against dual vectors. Exact only when the
    /// lagged factor cross moment is diagonal.
    Iso,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpOptions {
    /// Stop once the largest loading discrepancy between sweeps is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra random initializations tried after the deterministic starts.
    pub restarts: usize,
    pub seed: u64,
    pub refinement: Refinement,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            restarts: 0,
            seed: 0,
            refinement: Refinement::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpFit {
    pub model: CpModel,
    pub converged: bool,
    pub iterations: usize,
    /// Largest discrepancy between the last two sweeps.
    pub last_change: f64,
}

/// `sqrt(1 - (ûᵀu)²)` for unit vectors: the sine of the angle between them.
///
/// Evaluated as `‖û − u‖ ‖û + u‖ / 2`, which equals it for unit vectors and
/// stays accurate when the angle is tiny.
pub fn discrepancy(u_hat: &[f64], u: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in u_hat.iter().zip(u) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    ((minus * plus).sqrt() / 2.0).min(1.0)
}

pub fn fit_cp(series: &TensorSeries, r: usize, h: usize, opts: &CpOptions) -> Result<CpFit> {
    let shape = series.shape().to_vec();
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let min_dim = *shape.iter().min().expect("non-empty shape");
    if r > min_dim {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds smallest mode length {min_dim}"
        )));
    }
    if shape.len() == 1 && r > 1 {
        return Err(Error::InvalidArgument(
            "rank above 1 is not identifiable for order-1 observations".into(),
        ));
    }
    let moment = auto_moment(series, h)?;
    let scale = moment.matrix.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Estimation("auto-moment tensor is degenerate".into()));
    }

    let geometry = Geometry::new(&shape);
    let svd = moment.matrix.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let left = svd.u.as_ref().expect("left singular vectors requested");
    let right = svd.v_t.as_ref().expect("right singular vectors requested");
    let basis = DMatrix::from_columns(&order[..r].iter().map(|&i| left.column(i).into_owned()).collect::<Vec<_>>());
    let both = DMatrix::from_fn(basis.nrows(), 2 * r, |a, c| {
        if c < r {
            basis[(a, c)]
        } else {
            right[(order[c - r], a)]
        }
    });
    let subspace = DenseTensor::new(
        shape.iter().copied().chain([2 * r]).collect(),
        both.as_slice().to_vec(),
    )?;
    let mut inits = Vec::with_capacity(2 + opts.restarts);
    if let Some(init) = subspace_init(&basis, &shape) {
        inits.push(init);
    }
    inits.push(composite_pca(&basis, &shape)?);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        inits.push(random_init(&shape, r, &mut rng));
    }
    let mut best: Option<(f64, Refined)> = None;
    for init in inits {
        let cand = match opts.refinement {
            Refinement::Subspace => subspace_refine(&subspace, init, opts),
            Refinement::Iso => iso_refine(&moment.matrix, &geometry, init, opts),
        };
        let score = captured_energy(&moment.matrix, &cand.loadings);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, cand));
        }
    }
    let (_, best) = best.expect("at least one initialization");

    let mut loadings = best.loadings;
    for lj in loadings.iter_mut() {
        for v in lj.iter_mut() {
            fix_sign(v);
        }
    }
    let mut model = CpModel {
        shape,
        loadings,
        strengths: vec![0.0; r],
    };
    let panel = extract_factors(series, &model)?;
    let mut strengths: Vec<(usize, f64)> = panel
        .factors
        .iter()
        .map(|f| (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt())
        .enumerate()
        .collect();
    // Stable sort keeps the original order on ties.
    strengths.sort_by(|a, b| b.1.total_cmp(&a.1));
    model.loadings = strengths.iter().map(|&(j, _)| model.loadings[j].clone()).collect();
    model.strengths = strengths.iter().map(|&(_, s)| s).collect();

    Ok(CpFit {
        model,
        converged: best.converged,
        iterations: best.iterations,
        last_change: best.last_change,
    })
}

/// Index bookkeeping shared by all contractions against the auto-moment matrix.
struct Geometry {
    shape: Vec<usize>,
    /// `mode_index[k][a]` is the mode-`k` coordinate of linear index `a`.
    mode_index: Vec<Vec<usize>>,
}

impl Geometry {
    fn new(shape: &[usize]) -> Self {
        let d: usize = shape.iter().product();
        let mut mode_index = Vec::with_capacity(shape.len());
        let mut stride = 1;
        for &dk in shape {
            mode_index.push((0..d).map(|a| (a / stride) % dk).collect());
            stride *= dk;
        }
        Self {
            shape: shape.to_vec(),
            mode_index,
        }
    }

    /// `Σ` contracted with `vectors` on every mode except `k`, on both the
    /// lagged and current halves, leaving a `d_k × d_k` matrix.
    fn contract_except(&self, sigma: &DMatrix<f64>, vectors: &[Vec<f64>], k: usize) -> DMatrix<f64> {
        let dk = self.shape[k];
        let ones = vec![1.0; dk];
        let factors: Vec<&[f64]> = vectors
            .iter()
            .enumerate()
            .map(|(m, v)| if m == k { &ones[..] } else { &v[..] })
            .collect();
        let weights = outer_product(1.0, &factors);
        let idx = &self.mode_index[k];
        let d = weights.len();
        // Y = Σ P with P[b, i] = weights[b] 1{b_k = i}
        let mut y = DMatrix::<f64>::zeros(d, dk);
        for b in 0..d {
            let w = weights[b];
            if w == 0.0 {
                continue;
            }
            let src = sigma.column(b);
            let mut dst = y.column_mut(idx[b]);
            dst.axpy(w, &src, 1.0);
        }
        let mut out = DMatrix::<f64>::zeros(dk, dk);
        for a in 0..d {
            let w = weights[a];
            if w == 0.0 {
                continue;
            }
            let i = idx[a];
            for c in 0..dk {
                out[(i, c)] += w * y[(a, c)];
            }
        }
        out
    }
}

fn composite_pca(basis: &DMatrix<f64>, shape: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
    basis
        .column_iter()
        .map(|q| {
            let t = DenseTensor::new(shape.to_vec(), q.iter().copied().collect())?;
            Ok(rank_one_approx(&t))
        })
        .collect()
}

/// Splits the leading singular subspace of the auto-moment matrix into
/// rank-one directions by simultaneous diagonalization.
///
/// Each basis vector, reshaped to `d_1 × (d / d_1)`, is `U_1 diag(c) Bᵀ` in
/// the noiseless model. Two fixed combinations compressed to `r × r` give
/// `S D_a D_b⁻¹ S⁻¹`, whose eigenvectors carry the first-mode loadings. The
/// remaining modes follow from the dual of the first mode. Returns `None`
/// when a step is numerically singular.
fn subspace_init(basis: &DMatrix<f64>, shape: &[usize]) -> Option<Vec<Vec<Vec<f64>>>> {
    let r = basis.ncols();
    if r < 2 || shape.len() < 2 {
        return None;
    }
    let d1 = shape[0];
    let rest = basis.nrows() / d1;
    let slices: Vec<DMatrix<f64>> = basis
        .column_iter()
        .map(|q| DMatrix::from_column_slice(d1, rest, q.as_slice()))
        .collect();
    let wide = DMatrix::from_fn(d1, r * rest, |i, c| slices[c / rest][(i, c % rest)]);
    let tall = DMatrix::from_fn(rest, r * d1, |i, c| slices[c / d1][(c % d1, i)]);
    let (_, p) = sorted_left_svd(&wide);
    let (_, q) = sorted_left_svd(&tall);
    let p = p.columns(0, r).into_owned();
    let q = q.columns(0, r).into_owned();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let combo = |rng: &mut ChaCha8Rng| {
        let mut m = DMatrix::<f64>::zeros(r, r);
        for s in &slices {
            let w: f64 = StandardNormal.sample(rng);
            m += (p.transpose() * s * &q) * w;
        }
        m
    };
    let ma = combo(&mut rng);
    let mb = combo(&mut rng);
    let mb_inv = mb.try_inverse()?;
    let m = &ma * mb_inv;
    if !m.iter().all(|x| x.is_finite()) {
        return None;
    }
    let eig = m.complex_eigenvalues();
    let mut u1 = Vec::with_capacity(r);
    for mu in eig.iter() {
        let shifted = &m - DMatrix::<f64>::identity(r, r) * mu.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let s = vt.row(idx).transpose();
        let mut u: Vec<f64> = (&p * s).iter().copied().collect();
        if normalize(&mut u) == 0.0 {
            return None;
        }
        u1.push(nalgebra::DVector::from_vec(u));
    }
    let v1 = dual_basis(&DMatrix::from_columns(&u1))?;
    let mut out = Vec::with_capacity(r);
    for j in 0..r {
        let rows = DMatrix::from_fn(r, rest, |i, c| {
            (0..d1).map(|a| v1[(a, j)] * slices[i][(a, c)]).sum::<f64>()
        });
        let svd = rows.svd(false, true);
        let vt = svd.v_t?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        let b: Vec<f64> = vt.row(idx).iter().copied().collect();
        let mut lj = vec![u1[j].iter().copied().collect::<Vec<f64>>()];
        if shape.len() == 2 {
            let mut b = b;
            normalize(&mut b);
            lj.push(b);
        } else {
            let t = DenseTensor::new(shape[1..].to_vec(), b).ok()?;
            lj.extend(rank_one_approx(&t));
        }
        out.push(lj);
    }
    out.iter()
        .flatten()
        .flatten()
        .all(|x| x.is_finite())
        .then_some(out)
}

/// `‖Qᵀ Σ Q‖²_F` for an orthonormal basis `Q` of the span of the rank-one
/// vectors: how much of the auto-moment the loadings explain.
fn captured_energy(sigma: &DMatrix<f64>, loadings: &[Vec<Vec<f64>>]) -> f64 {
    let cols: Vec<_> = loadings
        .iter()
        .map(|lj| nalgebra::DVector::from_vec(outer_product(1.0, lj)))
        .collect();
    let a = DMatrix::from_columns(&cols);
    let q = a.qr().q();
    let inner = q.transpose() * sigma * &q;
    let e = inner.norm_squared();
    if e.is_finite() {
        e
    } else {
        f64::NEG_INFINITY
    }
}

/// Best rank-one approximation by higher-order power iteration started from
/// the leading singular vector of each unfolding.
pub(crate) fn rank_one_approx(t: &DenseTensor) -> Vec<Vec<f64>> {
    let order = t.order();
    let mut vecs: Vec<Vec<f64>> = (0..order)
        .map(|k| {
            let (u, _) = top_left_singular(&t.unfold(k).expect("mode in range"));
            u.iter().copied().collect()
        })
        .collect();
    if order == 1 {
        return vecs;
    }
    for _ in 0..100 {
        let mut change: f64 = 0.0;
        for k in 0..order {
            let mut cur = t.clone();
            for m in (0..order).rev() {
                if m != k {
                    cur = cur.mode_product(m, &vecs[m]).expect("shapes agree");
                }
            }
            let mut next = cur.into_data();
            if normalize(&mut next) == 0.0 {
                continue;
            }
            if dot(&next, &vecs[k]) < 0.0 {
                next.iter_mut().for_each(|x| *x = -*x);
            }
            change = change.max(discrepancy(&next, &vecs[k]));
            vecs[k] = next;
        }
        if change < 1e-12 {
            break;
        }
    }
    vecs
}

fn random_init(shape: &[usize], r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    (0..r)
        .map(|_| {
            shape
                .iter()
                .map(|&dk| {
                    let mut v: Vec<f64> = (0..dk).map(|_| StandardNormal.sample(rng)).collect();
                    normalize(&mut v);
                    v
                })
                .collect()
        })
        .collect()
}

struct Refined {
    loadings: Vec<Vec<Vec<f64>>>,
    converged: bool,
    iterations: usize,
    last_change: f64,
}

fn dual_basis(u: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let gram = u.transpose() * u;
    let inv = spd_inverse(&gram)?;
    Some(u * inv)
}

/// Dual vectors of factor `j`, or `None` when some mode is rank deficient.
fn duals_of(loadings: &[Vec<Vec<f64>>], j: usize) -> Option<Vec<Vec<f64>>> {
    let order = loadings[0].len();
    let mut out = Vec::with_capacity(order);
    for k in 0..order {
        if loadings.len() == 1 {
            out.push(loadings[j][k].clone());
            continue;
        }
        let cols: Vec<_> = loadings
            .iter()
            .map(|lj| nalgebra::DVector::from_column_slice(&lj[k]))
            .collect();
        let v = dual_basis(&DMatrix::from_columns(&cols))?;
        out.push(v.column(j).iter().copied().collect());
    }
    Some(out)
}

/// Alternating least squares for `T ≈ Σ_j u_j1 ∘ … ∘ u_jK ∘ c_j`, where the
/// last mode of `T` indexes the subspace basis vectors.
fn subspace_refine(t: &DenseTensor, mut loadings: Vec<Vec<Vec<f64>>>, opts: &CpOptions) -> Refined {
    let r = loadings.len();
    let modes = loadings[0].len();
    let grams = |vs: &[Vec<f64>]| {
        DMatrix::from_fn(r, r, |a, b| dot(&vs[a], &vs[b]))
    };
    // Least-squares update of factor matrix `k` given all the others.
    let update = |t: &DenseTensor, factors: &[Vec<Vec<f64>>], k: usize| -> Option<Vec<Vec<f64>>> {
        let mut h = DMatrix::<f64>::from_element(r, r, 1.0);
        for (m, f) in factors.iter().enumerate() {
            if m != k {
                h.component_mul_assign(&grams(f));
            }
        }
        let h_inv = spd_inverse(&h)?;
        let contracted: Vec<Vec<f64>> = (0..r)
            .map(|j| {
                let mut cur = t.clone();
                for m in (0..factors.len()).rev() {
                    if m != k {
                        cur = cur.mode_product(m, &factors[m][j]).expect("shapes agree");
                    }
                }
                cur.into_data()
            })
            .collect();
        let len = contracted[0].len();
        Some(
            (0..r)
                .map(|j| {
                    (0..len)
                        .map(|i| (0..r).map(|l| contracted[l][i] * h_inv[(l, j)]).sum())
                        .collect()
                })
                .collect(),
        )
    };
    // factors[m][j]: mode-major copy including the basis-coefficient mode.
    let mut factors: Vec<Vec<Vec<f64>>> = (0..modes)
        .map(|k| loadings.iter().map(|lj| lj[k].clone()).collect())
        .collect();
    factors.push(vec![vec![0.0; t.shape()[modes]]; r]);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    'sweeps: for it in 1..=opts.max_iter {
        iterations = it;
        match update(t, &factors, modes) {
            Some(c) => factors[modes] = c,
            None => break,
        }
        let mut change: f64 = 0.0;
        for k in 0..modes {
            let Some(mut next) = update(t, &factors, k) else {
                break 'sweeps;
            };
            for (j, v) in next.iter_mut().enumerate() {
                if normalize(v) == 0.0 {
                    v.clone_from(&factors[k][j]);
                }
                if dot(v, &factors[k][j]) < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                change = change.max(discrepancy(v, &factors[k][j]));
            }
            factors[k] = next;
        }
        last_change = change;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    for (j, lj) in loadings.iter_mut().enumerate() {
        for (k, v) in lj.iter_mut().enumerate() {
            v.clone_from(&factors[k][j]);
        }
    }
    Refined {
        loadings,
        converged,
        iterations,
        last_change,
    }
}

fn iso_refine(
    sigma: &DMatrix<f64>,
    geometry: &Geometry,
    mut loadings: Vec<Vec<Vec<f64>>>,
    opts: &CpOptions,
) -> Refined {
    let r = loadings.len();
    let order = geometry.shape.len();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        iterations = it;
        let mut change: f64 = 0.0;
        for j in 0..r {
            for k in 0..order {
                // Duals must reflect loadings already updated in this sweep.
                let Some(duals) = duals_of(&loadings, j) else {
                    continue;
                };
                let w = geometry.contract_except(sigma, &duals, k);
                let (u, _) = top_left_singular(&w);
                let mut next: Vec<f64> = u.iter().copied().collect();
                if normalize(&mut next) == 0.0 {
                    continue;
                }
                if dot(&next, &loadings[j][k]) < 0.0 {
                    next.iter_mut().for_each(|x| *x = -*x);
                }
                change = change.max(discrepancy(&next, &loadings[j][k]));
                loadings[j][k] = next;
            }
        }
        last_change = change;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Refined {
        loadings,
        converged,
        iterations,
        last_change,
    }
}

/// Estimated factor series, each an estimate of `λ_j f_jt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    /// `factors[j][t]`.
    pub factors: Vec<Vec<f64>>,
    pub exog: Option<ExogSeries>,
}

impl FactorPanel {
    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn len(&self) -> usize {
        self.factors.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Factor values at time `t`.
    pub fn at(&self, t: usize) -> Option<Vec<f64>> {
        (t < self.len()).then(|| self.factors.iter().map(|f| f[t]).collect())
    }
}

/// Projection vectors `v_j1 ∘ … ∘ v_jK` flattened, one per factor.
pub fn extraction_weights(model: &CpModel) -> Result<Vec<Vec<f64>>> {
    let duals = model.dual_loadings()?;
    Ok(duals.iter().map(|vj| outer_product(1.0, vj)).collect())
}

/// Factor values of one observation under the oblique projection.
pub fn extract_one(weights: &[Vec<f64>], x: &DenseTensor) -> Vec<f64> {
    weights.iter().map(|w| dot(w, x.data())).collect()
}

pub fn extract_factors(series: &TensorSeries, model: &CpModel) -> Result<FactorPanel> {
    model.check_shape(series.shape())?;
    let weights = extraction_weights(model)?;
    let factors = weights
        .iter()
        .map(|w| series.iter().map(|x| dot(w, x.data())).collect())
        .collect();
    Ok(FactorPanel {
        factors,
        exog: None,
    })
}

/// Eigen-ratio rank estimate from the singular values of the auto-moment matrix.
pub fn select_rank(series: &TensorSeries, h: usize, r_max: usize) -> Result<usize> {
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let moment = auto_moment(series, h)?;
    let values = moment.matrix.singular_values();
    let mut rho: Vec<f64> = values.iter().copied().collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    Ok(eigen_ratio(&rho, r_max))
}

/// `argmax_{1 ≤ i < r_max} ρ_i / ρ_{i+1}` (one-based), with ρ sorted descending.
pub fn eigen_ratio(rho: &[f64], r_max: usize) -> usize {
    let cap = r_max.min(rho.len());
    if cap < 2 || !(rho[0] > 0.0) {
        return 1;
    }
    let floor = rho[0] * f64::EPSILON * f64::EPSILON;
    let mut best = (1, f64::NEG_INFINITY);
    for i in 0..cap - 1 {
        let ratio = rho[i].max(floor) / rho[i + 1].max(floor);
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    best.0
}

/// `Σ_j f_j u_j1 ∘ … ∘ u_jK` for a vector of factor values.
pub fn reconstruct_values(model: &CpModel, values: &[f64]) -> Result<DenseTensor> {
    if values.len() != model.rank() {
        return Err(Error::Shape(format!(
            "{} factor values for rank-{} model",
            values.len(),
            model.rank()
        )));
    }
    let mut out = DenseTensor::zeros(&model.shape)?;
    for (lj, &f) in model.loadings.iter().zip(values) {
        out.rank1_accumulate(f, lj)?;
    }
    Ok(out)
}

pub fn reconstruct(model: &CpModel, factors: &FactorPanel, t: usize) -> Result<DenseTensor> {
    if factors.rank() != model.rank() {
        return Err(Error::Shape(format!(
            "panel has {} factors, model has rank {}",
            factors.rank(),
            model.rank()
        )));
    }
    let values = factors.at(t).ok_or_else(|| {
        Error::InvalidArgument(format!("time {t} outside panel of length {}", factors.len()))
    })?;
    reconstruct_values(model, &values)
}
