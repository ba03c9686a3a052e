//! Synthetic matrix/tensor factor data with threshold-autoregressive factors,
//! and the Monte-Carlo drivers built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cp::{self, CpModel, CpOptions};
use crate::error::{Error, Result};
use crate::linalg::normalize;
use crate::pipeline::{self, RefitPolicy, TtfmModel};
use crate::tar::{self, ExogSeries, SearchOptions, TarFit, ThresholdSource};
use crate::tensor::{DenseTensor, TensorSeries};

/// Threshold AR dynamics of one latent factor. Regime `ℓ` applies when the
/// threshold value lies in `[s_{ℓ-1}, s_ℓ)`, matching the strict lower
/// inequality of the generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDgp {
    pub coefficients: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub delay: usize,
    pub exogenous: bool,
    /// Standard deviation of the Gaussian innovations.
    #[serde(default = "unit")]
    pub innovation_sd: f64,
    /// Starting values, oldest first; zeros when empty.
    #[serde(default)]
    pub initial: Vec<f64>,
}

fn unit() -> f64 {
    1.0
}

impl FactorDgp {
    pub fn order(&self) -> usize {
        self.coefficients.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn regime(&self, z: f64) -> usize {
        self.thresholds.iter().filter(|&&s| s <= z).count()
    }

    fn step(&self, path: &[f64], z: f64, shock: f64) -> f64 {
        let coefs = &self.coefficients[self.regime(z)];
        let n = path.len();
        coefs.iter().enumerate().map(|(l, c)| c * path[n - 1 - l]).sum::<f64>() + shock
    }
}

/// The three self-exciting factors of the reference simulation design.
pub fn reference_factors() -> Vec<FactorDgp> {
    let se = |lower: Vec<f64>, upper: Vec<f64>| FactorDgp {
        coefficients: vec![lower, upper],
        thresholds: vec![0.0],
        delay: 1,
        exogenous: false,
        innovation_sd: 1.0,
        initial: Vec::new(),
    };
    vec![
        se(vec![0.5, 0.2], vec![0.7, -0.6]),
        se(vec![0.8, 0.1], vec![-0.4, -0.6]),
        se(vec![0.7], vec![-0.8]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dims: Vec<usize>,
    /// Observations used for fitting.
    pub t: usize,
    /// Extra observations generated after `t` for forecast evaluation.
    pub horizon: usize,
    /// Signal-to-noise ratio `λ / σ`.
    pub snr: f64,
    pub strength: f64,
    pub replicates: usize,
    pub seed: u64,
    pub factors: Vec<FactorDgp>,
    pub burn_in: usize,
    /// AR(1) coefficient of the exogenous threshold process, shared by all
    /// factors flagged `exogenous`.
    pub exog_ar: f64,
}

impl SimConfig {
    pub fn reference(dims: Vec<usize>, t: usize, snr: f64) -> Self {
        Self {
            dims,
            t,
            horizon: 200,
            snr,
            strength: 1.0,
            replicates: 100,
            seed: 0,
            factors: reference_factors(),
            burn_in: 500,
            exog_ar: 0.5,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.strength / self.snr
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.snr > 0.0) {
            problems.push(format!("snr must be positive, got {}", self.snr));
        }
        if self.dims.len() < 2 || self.dims.iter().any(|&d| d < 2) {
            problems.push(format!("dims must have at least two modes of length >= 2, got {:?}", self.dims));
        }
        if self.t <= 20 {
            problems.push(format!("t must exceed 20, got {}", self.t));
        }
        if self.t + self.horizon + self.burn_in
            < self.factors.iter().map(|f| f.order().max(f.delay).max(f.initial.len())).max().unwrap_or(0)
        {
            problems.push("too few time points for the factor starting values".into());
        }
        if self.factors.is_empty() {
            problems.push("at least one factor process is required".into());
        }
        if let Some(&dmin) = self.dims.iter().min() {
            if self.factors.len() > dmin {
                problems.push(format!("{} factors exceed smallest dimension {dmin}", self.factors.len()));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub loadings: Vec<Vec<Vec<f64>>>,
    /// `factors[j][t]` over `t + horizon` points.
    pub factors: Vec<Vec<f64>>,
    pub exog: Option<Vec<f64>>,
    pub signal: Vec<DenseTensor>,
    pub observations: TensorSeries,
    pub strength: f64,
}

impl SimTruth {
    pub fn model(&self) -> CpModel {
        CpModel {
            shape: self.observations.shape().to_vec(),
            loadings: self.loadings.clone(),
            strengths: vec![self.strength; self.loadings.len()],
        }
    }

    pub fn exog_series(&self) -> Option<ExogSeries> {
        self.exog.as_ref().map(|z| ExogSeries::new("z", z.clone()))
    }
}

/// Independent generator for replicate `replicate` of `cfg`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

pub fn generate(cfg: &SimConfig, replicate: u64) -> Result<SimTruth> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.seed, replicate);
    let n = cfg.t + cfg.horizon;
    let loadings: Vec<Vec<Vec<f64>>> = cfg
        .factors
        .iter()
        .map(|_| {
            cfg.dims
                .iter()
                .map(|&d| {
                    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    normalize(&mut v);
                    v
                })
                .collect()
        })
        .collect();

    let total = n + cfg.burn_in;
    let needs_exog = cfg.factors.iter().any(|f| f.exogenous);
    let exog_full: Option<Vec<f64>> = needs_exog.then(|| {
        let mut z = Vec::with_capacity(total);
        let mut prev = 0.0;
        for _ in 0..total {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = cfg.exog_ar * prev + e;
            z.push(prev);
        }
        z
    });

    let mut factors = Vec::with_capacity(cfg.factors.len());
    for dgp in &cfg.factors {
        let warm = dgp.order().max(dgp.delay).max(dgp.initial.len());
        let mut path = vec![0.0; warm - dgp.initial.len()];
        path.extend(&dgp.initial);
        for t in warm..total {
            let z = if dgp.exogenous {
                exog_full.as_ref().expect("exogenous path generated")[t - dgp.delay]
            } else {
                path[t - dgp.delay]
            };
            let e: f64 = StandardNormal.sample(&mut rng);
            let next = dgp.step(&path, z, dgp.innovation_sd * e);
            path.push(next);
        }
        factors.push(path[total - n..].to_vec());
    }
    let exog = exog_full.map(|z| z[total - n..].to_vec());

    let sigma = cfg.sigma();
    let mut signal = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    for t in 0..n {
        let mut m = DenseTensor::zeros(&cfg.dims)?;
        for (lj, fj) in loadings.iter().zip(&factors) {
            m.rank1_accumulate(cfg.strength * fj[t], lj)?;
        }
        let mut x = m.clone();
        if sigma > 0.0 {
            for v in x.data_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * e;
            }
        }
        signal.push(m);
        observations.push(x);
    }
    Ok(SimTruth {
        loadings,
        factors,
        exog,
        signal,
        observations: TensorSeries::new(observations)?,
        strength: cfg.strength,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// `permutation[j]` is the estimated component matched to true factor `j`.
    pub permutation: Vec<usize>,
    /// `signs[j][k]` multiplies estimated loading `(permutation[j], k)`.
    pub signs: Vec<Vec<f64>>,
    /// `Σ_k ‖û_jk − u_jk‖² / d_k` after matching, in the truth's ordering.
    pub mse: Vec<f64>,
    /// `sqrt(1 − (ûᵀu)²)` per factor and mode.
    pub discrepancy: Vec<Vec<f64>>,
}

impl AlignmentResult {
    /// Sign of the matched factor series: the product of its mode signs.
    pub fn factor_sign(&self, j: usize) -> f64 {
        self.signs[j].iter().product()
    }

    /// The estimated model permuted and sign-flipped into the truth's ordering.
    pub fn apply(&self, est: &CpModel) -> CpModel {
        let loadings = self
            .permutation
            .iter()
            .zip(&self.signs)
            .map(|(&e, s)| {
                est.loadings[e]
                    .iter()
                    .zip(s)
                    .map(|(u, &sg)| u.iter().map(|x| sg * x).collect())
                    .collect()
            })
            .collect();
        let strengths = self.permutation.iter().map(|&e| est.strengths[e]).collect();
        CpModel {
            shape: est.shape.clone(),
            loadings,
            strengths,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64], sign: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (sign * x - y).powi(2)).sum()
}

/// Matches estimated components to true ones by exhaustive search over
/// permutations, choosing each loading's sign optimally.
pub fn align(est: &CpModel, truth: &[Vec<Vec<f64>>]) -> Result<AlignmentResult> {
    let r = truth.len();
    if est.rank() != r {
        return Err(Error::Shape(format!("estimated rank {} vs true rank {r}", est.rank())));
    }
    if r > 8 {
        return Err(Error::InvalidArgument(format!("exhaustive alignment limited to rank 8, got {r}")));
    }
    let dims: Vec<usize> = est.shape.clone();
    // cost[j][e] and the best signs for pairing truth j with estimate e.
    let mut cost = vec![vec![0.0; r]; r];
    let mut best_signs = vec![vec![Vec::new(); r]; r];
    for (j, tj) in truth.iter().enumerate() {
        if tj.len() != dims.len() {
            return Err(Error::Shape("true loadings have the wrong number of modes".into()));
        }
        for e in 0..r {
            let mut c = 0.0;
            let mut signs = Vec::with_capacity(dims.len());
            for (k, &dk) in dims.iter().enumerate() {
                let plus = sq_dist(&est.loadings[e][k], &tj[k], 1.0);
                let minus = sq_dist(&est.loadings[e][k], &tj[k], -1.0);
                let (s, v) = if minus < plus { (-1.0, minus) } else { (1.0, plus) };
                signs.push(s);
                c += v / dk as f64;
            }
            cost[j][e] = c;
            best_signs[j][e] = signs;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(r) {
        let total: f64 = perm.iter().enumerate().map(|(j, &e)| cost[j][e]).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm));
        }
    }
    let (_, permutation) = best.expect("at least one permutation");
    let signs: Vec<Vec<f64>> = permutation
        .iter()
        .enumerate()
        .map(|(j, &e)| best_signs[j][e].clone())
        .collect();
    let mse = permutation.iter().enumerate().map(|(j, &e)| cost[j][e]).collect();
    let discrepancy = permutation
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            (0..dims.len())
                .map(|k| cp::discrepancy(&est.loadings[e][k], &truth[j][k]))
                .collect()
        })
        .collect();
    Ok(AlignmentResult {
        permutation,
        signs,
        mse,
        discrepancy,
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Fraction of points where the fitted lower regime (`ẑ ≤ ŝ`) agrees with
/// the true lower regime (`z < 0`).
pub fn regime_classification_proportion(z_hat: &[f64], s_hat: f64, z_true: &[f64]) -> Result<f64> {
    if z_hat.len() != z_true.len() {
        return Err(Error::Shape(format!(
            "{} estimated vs {} true threshold values",
            z_hat.len(),
            z_true.len()
        )));
    }
    if z_hat.is_empty() {
        return Err(Error::InsufficientData("no points to classify".into()));
    }
    let hits = z_hat
        .iter()
        .zip(z_true)
        .filter(|(&zh, &zt)| (zh <= s_hat) == (zt < 0.0))
        .count();
    Ok(hits as f64 / z_hat.len() as f64)
}

/// Fits the two-regime self-exciting TAR used by the study, with the true
/// order and delay.
fn fit_study_tar(y: &[f64], dgp: &FactorDgp) -> Result<TarFit> {
    let z = tar::threshold_values(y, &ThresholdSource::SelfExciting, None, dgp.delay)?;
    let opts = SearchOptions {
        regimes: dgp.coefficients.len(),
        ..SearchOptions::default()
    };
    let mut fit = tar::threshold_search(y, &z, dgp.order(), &opts)?;
    fit.delay = dgp.delay;
    Ok(fit)
}

/// Cell of the study grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub dims: Vec<Vec<usize>>,
    pub snr: Vec<f64>,
    pub t: Vec<usize>,
    pub replicates: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl StudyGrid {
    /// Dimensions, signal-to-noise ratios and sample sizes of the reference design.
    pub fn reference(replicates: usize, seed: u64) -> Self {
        Self {
            dims: vec![vec![5, 7], vec![10, 14], vec![20, 25]],
            snr: vec![0.5, 1.0, 2.0],
            t: vec![200, 500, 1000],
            replicates,
            horizon: 200,
            seed,
        }
    }

    pub fn cells(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for dims in &self.dims {
            for &snr in &self.snr {
                for &t in &self.t {
                    let mut cfg = SimConfig::reference(dims.clone(), t, snr);
                    cfg.horizon = self.horizon;
                    cfg.replicates = self.replicates;
                    cfg.seed = self.seed;
                    out.push(cfg);
                }
            }
        }
        out
    }
}

pub const STUDY_HEADER: &str = "dims,snr,t,replicate,metric,factor,value";

/// One value of one metric for one replicate of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub dims: Vec<usize>,
    pub snr: f64,
    pub t: usize,
    pub replicate: usize,
    pub metric: &'static str,
    /// One-based factor index for per-factor metrics.
    pub factor: Option<usize>,
    pub value: f64,
}

impl StudyRow {
    pub fn dims_label(&self) -> String {
        dims_label(&self.dims)
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.dims_label(),
            self.snr,
            self.t,
            self.replicate,
            self.metric,
            self.factor.map_or(String::new(), |f| f.to_string()),
            self.value
        )
    }
}

pub fn dims_label(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub const METRIC_LOG_MSE: &str = "log_mse";
pub const METRIC_PROP_EST: &str = "prop_est";
pub const METRIC_PROP_REAL: &str = "prop_real";
pub const METRIC_PRED_OBS_EST: &str = "pred_obs_est";
pub const METRIC_PRED_OBS_REAL: &str = "pred_obs_real";
pub const METRIC_PRED_SIGNAL_EST: &str = "pred_signal_est";
pub const METRIC_PRED_SIGNAL_REAL: &str = "pred_signal_real";

/// Runs every replicate of every cell; rows come back in cell, replicate,
/// metric order regardless of scheduling.
pub fn run_study(grid: &StudyGrid) -> Result<Vec<StudyRow>> {
    let jobs: Vec<(SimConfig, usize)> = grid
        .cells()
        .into_iter()
        .flat_map(|cfg| (0..grid.replicates).map(move |rep| (cfg.clone(), rep)))
        .collect();
    let chunks: Vec<Result<Vec<StudyRow>>> =
        jobs.par_iter().map(|(cfg, rep)| run_replicate(cfg, *rep)).collect();
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

/// All metrics of one replicate: loading MSE, regime classification for the
/// estimated and true-factor arms, and one-step prediction errors over the
/// horizon for both arms.
pub fn run_replicate(cfg: &SimConfig, replicate: usize) -> Result<Vec<StudyRow>> {
    let truth = generate(cfg, replicate as u64)?;
    let r = cfg.factors.len();
    let train = truth.observations.prefix(cfg.t)?;
    let fit = cp::fit_cp(&train, r, 1, &CpOptions::default())?;
    let alignment = align(&fit.model, &truth.loadings)?;
    let aligned = alignment.apply(&fit.model);
    let panel = cp::extract_factors(&truth.observations, &aligned)?;

    let row = |metric, factor: Option<usize>, value| StudyRow {
        dims: cfg.dims.clone(),
        snr: cfg.snr,
        t: cfg.t,
        replicate,
        metric,
        factor,
        value,
    };
    let mut rows = Vec::new();
    for (j, m) in alignment.mse.iter().enumerate() {
        rows.push(row(METRIC_LOG_MSE, Some(j + 1), m.ln()));
    }

    let mut est_fits = Vec::with_capacity(r);
    let mut real_fits = Vec::with_capacity(r);
    for (j, dgp) in cfg.factors.iter().enumerate() {
        let f_hat = &panel.factors[j][..cfg.t];
        let f_true = &truth.factors[j][..cfg.t];
        let est = fit_study_tar(f_hat, dgp)?;
        let real = fit_study_tar(f_true, dgp)?;
        let s = est.start;
        let z_hat: Vec<f64> = (s..cfg.t).map(|t| f_hat[t - dgp.delay]).collect();
        let z_true: Vec<f64> = (s..cfg.t).map(|t| f_true[t - dgp.delay]).collect();
        let prop_est = regime_classification_proportion(&z_hat, est.thresholds[0], &z_true)?;
        let prop_real = regime_classification_proportion(&z_true, real.thresholds[0], &z_true)?;
        rows.push(row(METRIC_PROP_EST, Some(j + 1), prop_est));
        rows.push(row(METRIC_PROP_REAL, Some(j + 1), prop_real));
        est_fits.push(est);
        real_fits.push(real);
    }

    if cfg.horizon > 0 {
        let model = TtfmModel {
            cp: aligned,
            tars: est_fits,
            lag: 1,
        };
        let origin = cfg.t - 1;
        let last = cfg.t + cfg.horizon - 2;
        let records = pipeline::rolling_forecast(
            &model,
            &truth.observations,
            None,
            origin,
            last,
            RefitPolicy::Frozen,
            Some(&truth.signal),
        )?;
        let n = records.len() as f64;
        let obs: f64 = records.iter().map(|r| r.sq_err_obs).sum::<f64>() / n;
        let sig: f64 = records.iter().filter_map(|r| r.sq_err_signal).sum::<f64>() / n;
        let (obs_real, sig_real) = true_factor_forecast_errors(&truth, &real_fits, origin, last)?;
        rows.push(row(METRIC_PRED_OBS_EST, None, obs));
        rows.push(row(METRIC_PRED_OBS_REAL, None, obs_real));
        rows.push(row(METRIC_PRED_SIGNAL_EST, None, sig));
        rows.push(row(METRIC_PRED_SIGNAL_REAL, None, sig_real));
    }
    Ok(rows)
}

/// Mean squared one-step errors against observations and signal when the
/// true loadings and true factor paths drive the forecasts.
fn true_factor_forecast_errors(
    truth: &SimTruth,
    fits: &[TarFit],
    origin: usize,
    last: usize,
) -> Result<(f64, f64)> {
    let model = truth.model();
    let mut obs = 0.0;
    let mut sig = 0.0;
    for t in origin..=last {
        let f: Vec<f64> = fits
            .iter()
            .zip(&truth.factors)
            .map(|(fit, path)| tar::forecast_next(fit, path, t, None).map(|v| v * truth.strength))
            .collect::<Result<_>>()?;
        let xhat = cp::reconstruct_values(&model, &f)?;
        obs += xhat.sub(&truth.observations.items()[t + 1])?.frobenius_sq();
        sig += xhat.sub(&truth.signal[t + 1])?.frobenius_sq();
    }
    let n = (last - origin + 1) as f64;
    Ok((obs / n, sig / n))
}

/// Parameter errors of a single exogenous-threshold fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdErrors {
    pub threshold_abs_err: f64,
    pub coef_err: f64,
}

/// One-factor design driven by an exogenous AR(1) threshold variable.
pub fn exogenous_config(dims: Vec<usize>, t: usize, snr: f64, seed: u64) -> SimConfig {
    SimConfig {
        dims,
        t,
        horizon: 0,
        snr,
        strength: 1.0,
        replicates: 1,
        seed,
        factors: vec![FactorDgp {
            coefficients: vec![vec![0.6], vec![-0.5]],
            thresholds: vec![0.0],
            delay: 1,
            exogenous: true,
            innovation_sd: 1.0,
            initial: Vec::new(),
        }],
        burn_in: 500,
        exog_ar: 0.5,
    }
}

/// Fits the full two-stage model on one replicate of a one-factor design and
/// reports threshold and coefficient errors against the generator.
pub fn threshold_errors(cfg: &SimConfig, replicate: u64) -> Result<ThresholdErrors> {
    let truth = generate(cfg, replicate)?;
    let dgp = &cfg.factors[0];
    let (fit, _) = fit_one_factor(cfg, &truth)?;
    let true_phi: Vec<f64> = dgp.coefficients.iter().flatten().copied().collect();
    let est_phi: Vec<f64> = fit
        .regimes
        .iter()
        .flat_map(|r| r.coefficients.iter().copied())
        .collect();
    let coef_err = true_phi
        .iter()
        .zip(&est_phi)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ThresholdErrors {
        threshold_abs_err: (fit.thresholds[0] - dgp.thresholds[0]).abs(),
        coef_err,
    })
}

/// Stage one plus a TAR with the true order, delay and threshold source on
/// the sign-aligned factor. Returns the fit and the factor series it used.
fn fit_one_factor(cfg: &SimConfig, truth: &SimTruth) -> Result<(TarFit, Vec<f64>)> {
    let dgp = &cfg.factors[0];
    let fit = cp::fit_cp(&truth.observations, 1, 1, &CpOptions::default())?;
    let alignment = align(&fit.model, &truth.loadings)?;
    let aligned = alignment.apply(&fit.model);
    let y = cp::extract_factors(&truth.observations, &aligned)?.factors.remove(0);
    let exog = truth.exog_series();
    let source = if dgp.exogenous {
        ThresholdSource::Exogenous("z".into())
    } else {
        ThresholdSource::SelfExciting
    };
    let z = tar::threshold_values(&y, &source, exog.as_ref(), dgp.delay)?;
    let opts = SearchOptions {
        regimes: dgp.coefficients.len(),
        ..SearchOptions::default()
    };
    let mut tar_fit = tar::threshold_search(&y, &z, dgp.order(), &opts)?;
    tar_fit.source = source;
    tar_fit.delay = dgp.delay;
    Ok((tar_fit, y))
}

/// Per-replicate threshold and coefficient errors for each sample size.
pub fn threshold_rate_study(
    base: &SimConfig,
    sample_sizes: &[usize],
    replicates: usize,
) -> Result<Vec<(usize, Vec<ThresholdErrors>)>> {
    sample_sizes
        .iter()
        .map(|&t| {
            let cfg = SimConfig { t, ..base.clone() };
            let errs = (0..replicates as u64)
                .into_par_iter()
                .map(|rep| threshold_errors(&cfg, rep))
                .collect::<Result<Vec<_>>>()?;
            Ok((t, errs))
        })
        .collect()
}

/// Fraction of replicates whose nominal 95% interval for the first
/// coefficient of the lower regime covers the true value.
pub fn clt_coverage(cfg: &SimConfig, replicates: usize) -> Result<f64> {
    let dgp = &cfg.factors[0];
    let truth_phi = dgp.coefficients[0][0];
    let hits = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| -> Result<bool> {
            let truth = generate(cfg, rep)?;
            let (fit, y) = fit_one_factor(cfg, &truth)?;
            let cov = tar::asymptotic_covariance(&fit, &y)?;
            let idx = usize::from(fit.intercept);
            let se = cov[0][(idx, idx)].sqrt();
            let est = fit.regimes[0].coefficients[0];
            Ok((est - truth_phi).abs() <= 1.959_963_984_540_054 * se)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / replicates as f64)
}

/// Uniform draw helper used by property tests for random unit vectors.
pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}
