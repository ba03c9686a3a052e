//! Second-stage threshold autoregressions fitted to univariate factor series.
//!
//! A fit with `L` regimes and thresholds `s_1 < … < s_{L-1}` uses the AR
//! coefficients of regime `ℓ` whenever the threshold value lies in
//! `(s_{ℓ-1}, s_ℓ]`, with `s_0 = -∞` and `s_L = +∞`. Thresholds are searched
//! exhaustively over observed threshold values; only splits between distinct
//! consecutive values are distinguishable, and the reported threshold is the
//! observed value closing the lower regime.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_solve};

/// Exogenous threshold variable. `values[lead_in + t]` is the value at time
/// `t` of the series it is paired with; the lead-in holds earlier history so
/// delayed values can reach before the first modelled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogSeries {
    pub name: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub lead_in: usize,
}

impl ExogSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            lead_in: 0,
        }
    }

    /// `z_{t - delay}`, if observed.
    pub fn at(&self, t: usize, delay: usize) -> Option<f64> {
        let i = (t + self.lead_in).checked_sub(delay)?;
        self.values.get(i).copied().filter(|v| v.is_finite())
    }

    /// Number of modelled time points covered (excluding the lead-in).
    pub fn len(&self) -> usize {
        self.values.len().saturating_sub(self.lead_in)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Lagged values of the series itself.
    SelfExciting,
    /// A named exogenous series.
    Exogenous(String),
}

/// Model structure and search grid for one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarSpec {
    pub regimes: usize,
    /// Candidate AR orders.
    pub orders: Vec<usize>,
    /// Candidate delays of the threshold variable.
    pub delays: Vec<usize>,
    pub source: ThresholdSource,
    pub trim: f64,
    #[serde(default)]
    pub intercept: bool,
    /// Optional per-regime orders, each at most the shared order.
    #[serde(default)]
    pub regime_orders: Option<Vec<usize>>,
}

impl Default for TarSpec {
    fn default() -> Self {
        Self {
            regimes: 2,
            orders: vec![1],
            delays: vec![1],
            source: ThresholdSource::SelfExciting,
            trim: 0.1,
            intercept: false,
            regime_orders: None,
        }
    }
}

impl TarSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=3).contains(&self.regimes) {
            problems.push(format!("regimes must be 1, 2 or 3, got {}", self.regimes));
        }
        if self.orders.is_empty() || self.orders.contains(&0) {
            problems.push("orders must be a nonempty set of positive integers".to_string());
        }
        if self.delays.is_empty() {
            problems.push("delays must be nonempty".to_string());
        }
        if self.source == ThresholdSource::SelfExciting && self.delays.contains(&0) {
            problems.push("self-exciting delays must be at least 1".to_string());
        }
        if !(self.trim > 0.0 && self.trim < 0.5) {
            problems.push(format!("trim must lie in (0, 0.5), got {}", self.trim));
        }
        if let Some(ro) = &self.regime_orders {
            if ro.len() != self.regimes {
                problems.push(format!(
                    "regime_orders has {} entries for {} regimes",
                    ro.len(),
                    self.regimes
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    /// AR coefficients on lags `1..=order`; zero beyond the regime's own order.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Residual standard deviation `ς` within the regime.
    pub noise_scale: f64,
    pub ssr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarFit {
    pub order: usize,
    pub regime_orders: Vec<usize>,
    pub intercept: bool,
    pub source: ThresholdSource,
    pub delay: usize,
    pub delay_searched: bool,
    pub trim: f64,
    pub thresholds: Vec<f64>,
    pub regimes: Vec<RegimeFit>,
    /// First time index of the estimation sample.
    pub start: usize,
    /// Regime of each sample point `start..start + labels.len()`.
    pub labels: Vec<usize>,
    pub ssr: f64,
    /// Pooled residual variance `SSR / N`.
    pub sigma2: f64,
    pub n_eff: usize,
    pub aic: f64,
    pub bic: f64,
}

impl TarFit {
    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    /// Regime whose interval `(s_{ℓ-1}, s_ℓ]` contains `z` (zero-based).
    pub fn regime_of(&self, z: f64) -> usize {
        regime_of(&self.thresholds, z)
    }

    pub fn num_params(&self) -> usize {
        let lags: usize = self.regime_orders.iter().sum();
        let intercepts = if self.intercept { self.regimes.len() } else { 0 };
        lags + intercepts + (self.regimes.len() - 1) + usize::from(self.delay_searched)
    }
}

pub fn regime_of(thresholds: &[f64], z: f64) -> usize {
    thresholds.iter().filter(|&&s| s < z).count()
}

/// Threshold values aligned with `y`: entry `t` determines the regime of `y_t`.
/// Unavailable entries are NaN.
pub fn threshold_values(
    y: &[f64],
    source: &ThresholdSource,
    exog: Option<&ExogSeries>,
    delay: usize,
) -> Result<Vec<f64>> {
    match source {
        ThresholdSource::SelfExciting => {
            if delay == 0 {
                return Err(Error::InvalidArgument(
                    "self-exciting delay must be at least 1".into(),
                ));
            }
            Ok((0..y.len())
                .map(|t| t.checked_sub(delay).map_or(f64::NAN, |i| y[i]))
                .collect())
        }
        ThresholdSource::Exogenous(name) => {
            let z = exog.ok_or_else(|| {
                Error::InvalidArgument(format!("exogenous threshold series '{name}' not supplied"))
            })?;
            if z.len() < y.len() {
                return Err(Error::Shape(format!(
                    "threshold series '{}' covers {} points, factor has {}",
                    z.name,
                    z.len(),
                    y.len()
                )));
            }
            Ok((0..y.len()).map(|t| z.at(t, delay).unwrap_or(f64::NAN)).collect())
        }
    }
}

/// Value of the threshold variable that selects the regime of `y_t`, using
/// only `y[..t]` and the exogenous series.
pub fn threshold_value_at(
    y: &[f64],
    source: &ThresholdSource,
    exog: Option<&ExogSeries>,
    delay: usize,
    t: usize,
) -> Option<f64> {
    match source {
        ThresholdSource::SelfExciting => {
            let i = t.checked_sub(delay)?;
            (delay >= 1).then(|| y.get(i).copied()).flatten()
        }
        ThresholdSource::Exogenous(_) => exog?.at(t, delay),
    }
}

/// Regression design for the sample `start..n`.
struct Design {
    /// Row `i` holds `[1?, y_{t-1}, …, y_{t-p}]` for `t = start + i`.
    x: Vec<Vec<f64>>,
    target: Vec<f64>,
    width: usize,
}

impl Design {
    fn new(y: &[f64], p: usize, intercept: bool, start: usize) -> Self {
        let width = p + usize::from(intercept);
        let mut x = Vec::with_capacity(y.len().saturating_sub(start));
        let mut target = Vec::with_capacity(x.capacity());
        for t in start..y.len() {
            let mut row = Vec::with_capacity(width);
            if intercept {
                row.push(1.0);
            }
            row.extend((1..=p).map(|l| y[t - l]));
            x.push(row);
            target.push(y[t]);
        }
        Self { x, target, width }
    }

    fn len(&self) -> usize {
        self.target.len()
    }
}

fn regime_width(p_l: usize, intercept: bool) -> usize {
    p_l + usize::from(intercept)
}

fn resolve_regime_orders(p: usize, regimes: usize, over: Option<&[usize]>) -> Result<Vec<usize>> {
    match over {
        None => Ok(vec![p; regimes]),
        Some(ro) => {
            if ro.len() != regimes {
                return Err(Error::InvalidArgument(format!(
                    "{} regime orders for {regimes} regimes",
                    ro.len()
                )));
            }
            if ro.iter().any(|&q| q == 0 || q > p) {
                return Err(Error::InvalidArgument(format!(
                    "regime orders {ro:?} must lie in 1..={p}"
                )));
            }
            Ok(ro.to_vec())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFit {
    pub regimes: Vec<RegimeFit>,
    pub ssr: f64,
}

/// Per-regime OLS on lagged regressors for a fixed assignment of the sample
/// `start..y.len()` to regimes.
pub fn ls_given_partition(
    y: &[f64],
    p: usize,
    labels: &[usize],
    regimes: usize,
    intercept: bool,
    regime_orders: Option<&[usize]>,
    start: usize,
) -> Result<PartitionFit> {
    if p == 0 {
        return Err(Error::InvalidArgument("AR order must be at least 1".into()));
    }
    if start < p || start > y.len() {
        return Err(Error::InvalidArgument(format!(
            "sample start {start} invalid for order {p} and length {}",
            y.len()
        )));
    }
    if labels.len() != y.len() - start {
        return Err(Error::Shape(format!(
            "{} labels for {} sample points",
            labels.len(),
            y.len() - start
        )));
    }
    let orders = resolve_regime_orders(p, regimes, regime_orders)?;
    let design = Design::new(y, p, intercept, start);
    let mut fits = Vec::with_capacity(regimes);
    let mut total = 0.0;
    for (l, &q) in orders.iter().enumerate() {
        let rows: Vec<usize> = (0..design.len()).filter(|&i| labels[i] == l).collect();
        let width = regime_width(q, intercept);
        if rows.len() < width + 1 {
            return Err(Error::RankDeficient(format!(
                "regime {} has {} observations for {width} coefficients",
                l + 1,
                rows.len()
            )));
        }
        let xm = DMatrix::from_fn(rows.len(), width, |i, c| design.x[rows[i]][c]);
        let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| design.target[i]));
        let beta = least_squares(&xm, &yv)
            .ok_or_else(|| Error::RankDeficient(format!("regime {} design is singular", l + 1)))?;
        let resid = &yv - &xm * &beta;
        let ssr = resid.norm_squared();
        total += ssr;
        let (icpt, lags) = if intercept {
            (beta[0], beta.rows(1, q).iter().copied().collect::<Vec<_>>())
        } else {
            (0.0, beta.iter().copied().collect())
        };
        let mut coefficients = lags;
        coefficients.resize(p, 0.0);
        fits.push(RegimeFit {
            coefficients,
            intercept: icpt,
            noise_scale: (ssr / rows.len() as f64).sqrt(),
            ssr,
            count: rows.len(),
        });
    }
    Ok(PartitionFit {
        regimes: fits,
        ssr: total,
    })
}

/// Householder least squares; `None` when the design is numerically rank deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = scale * f64::EPSILON * (x.nrows().max(n) as f64);
    if !(scale > 0.0) || (0..n).any(|i| r[(i, i)].abs() <= tol) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub regimes: usize,
    pub trim: f64,
    pub intercept: bool,
    pub regime_orders: Option<Vec<usize>>,
    /// Force a later sample start, e.g. to share one sample across a grid.
    pub start: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            regimes: 2,
            trim: 0.1,
            intercept: false,
            regime_orders: None,
            start: None,
        }
    }
}

/// Smallest per-regime count allowed under trimming.
pub fn trim_floor(p: usize, n_eff: usize, trim: f64) -> usize {
    (p + 2).max((trim * n_eff as f64).ceil() as usize)
}

/// First index `t ≥ p` from which the threshold values are all available.
pub fn natural_start(z: &[f64], p: usize) -> Result<usize> {
    let first = z.iter().position(|v| v.is_finite()).unwrap_or(z.len());
    if let Some(gap) = z[first..].iter().position(|v| !v.is_finite()) {
        return Err(Error::InsufficientHistory(format!(
            "threshold variable missing at index {}",
            first + gap
        )));
    }
    Ok(first.max(p))
}

/// Least-squares threshold search over observed threshold values.
///
/// `z[t]` is the threshold value governing `y[t]`; non-finite leading
/// entries mark times where it is unavailable.
pub fn threshold_search(y: &[f64], z: &[f64], p: usize, opts: &SearchOptions) -> Result<TarFit> {
    if p == 0 {
        return Err(Error::InvalidArgument("AR order must be at least 1".into()));
    }
    if z.len() != y.len() {
        return Err(Error::Shape(format!(
            "threshold variable has length {}, series has {}",
            z.len(),
            y.len()
        )));
    }
    if !(1..=3).contains(&opts.regimes) {
        return Err(Error::InvalidArgument(format!(
            "regimes must be 1, 2 or 3, got {}",
            opts.regimes
        )));
    }
    if !(opts.trim > 0.0 && opts.trim < 0.5) {
        return Err(Error::InvalidArgument(format!("trim {} outside (0, 0.5)", opts.trim)));
    }
    let start = natural_start(z, p)?.max(opts.start.unwrap_or(0));
    if start >= y.len() {
        return Err(Error::InsufficientData(format!(
            "no observations after sample start {start}"
        )));
    }
    let orders = resolve_regime_orders(p, opts.regimes, opts.regime_orders.as_deref())?;
    let design = Design::new(y, p, opts.intercept, start);
    let n_eff = design.len();
    let zs = &z[start..];

    let thresholds = match opts.regimes {
        1 => Vec::new(),
        l => {
            let floor = trim_floor(p, n_eff, opts.trim);
            let sorted = SortedMoments::new(&design, zs);
            let cuts = if l == 2 {
                best_two_regime(&sorted, &orders, opts.intercept, floor)
            } else {
                best_three_regime(&sorted, &orders, opts.intercept, floor)
            };
            let cuts = cuts.ok_or_else(|| {
                Error::Infeasible(format!(
                    "{l} regimes with at least {floor} observations each among {n_eff}"
                ))
            })?;
            cuts.iter().map(|&c| sorted.z[c - 1]).collect()
        }
    };

    let labels: Vec<usize> = zs.iter().map(|&v| regime_of(&thresholds, v)).collect();
    let part = ls_given_partition(
        y,
        p,
        &labels,
        opts.regimes,
        opts.intercept,
        Some(&orders),
        start,
    )?;
    let mut fit = TarFit {
        order: p,
        regime_orders: orders,
        intercept: opts.intercept,
        source: ThresholdSource::SelfExciting,
        delay: 0,
        delay_searched: false,
        trim: opts.trim,
        thresholds,
        regimes: part.regimes,
        start,
        labels,
        ssr: part.ssr,
        sigma2: part.ssr / n_eff as f64,
        n_eff,
        aic: 0.0,
        bic: 0.0,
    };
    update_information_criteria(&mut fit);
    Ok(fit)
}

pub(crate) fn update_information_criteria(fit: &mut TarFit) {
    let n = fit.n_eff as f64;
    let k = fit.num_params() as f64;
    let base = n * fit.sigma2.ln();
    fit.aic = base + 2.0 * k;
    fit.bic = base + n.ln() * k;
}

/// Sample rows sorted by threshold value, with prefix sums of the moment
/// matrices so any contiguous block's regression is available in `O(q³)`.
struct SortedMoments {
    z: Vec<f64>,
    width: usize,
    /// `gram[i]` = Σ_{m<i} x xᵀ, row-major `width × width`.
    gram: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
    yy: Vec<f64>,
}

impl SortedMoments {
    fn new(design: &Design, z: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..design.len()).collect();
        order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
        let w = design.width;
        let mut gram = Vec::with_capacity(order.len() + 1);
        let mut cross = Vec::with_capacity(order.len() + 1);
        let mut yy = Vec::with_capacity(order.len() + 1);
        let mut g = vec![0.0; w * w];
        let mut c = vec![0.0; w];
        let mut s = 0.0;
        gram.push(g.clone());
        cross.push(c.clone());
        yy.push(s);
        for &i in &order {
            let x = &design.x[i];
            let t = design.target[i];
            for a in 0..w {
                for b in 0..w {
                    g[a * w + b] += x[a] * x[b];
                }
                c[a] += x[a] * t;
            }
            s += t * t;
            gram.push(g.clone());
            cross.push(c.clone());
            yy.push(s);
        }
        Self {
            z: order.iter().map(|&i| z[i]).collect(),
            width: w,
            gram,
            cross,
            yy,
        }
    }

    fn len(&self) -> usize {
        self.z.len()
    }

    /// A cut at `c` splits sorted rows into `..c` and `c..`; only cuts between
    /// distinct threshold values are admissible.
    fn admissible(&self, c: usize) -> bool {
        c > 0 && c < self.len() && self.z[c - 1] < self.z[c]
    }

    /// Residual sum of squares of the block `a..b` using the leading `q` regressors.
    fn block_ssr(&self, a: usize, b: usize, q: usize) -> Option<f64> {
        let w = self.width;
        let g = DMatrix::from_fn(q, q, |i, j| self.gram[b][i * w + j] - self.gram[a][i * w + j]);
        let c = DVector::from_fn(q, |i, _| self.cross[b][i] - self.cross[a][i]);
        let beta = spd_solve(&g, &c)?;
        let ssr = (self.yy[b] - self.yy[a]) - c.dot(&beta);
        Some(ssr.max(0.0))
    }
}

fn best_two_regime(
    m: &SortedMoments,
    orders: &[usize],
    intercept: bool,
    floor: usize,
) -> Option<Vec<usize>> {
    let n = m.len();
    let (q0, q1) = (regime_width(orders[0], intercept), regime_width(orders[1], intercept));
    let mut best: Option<(f64, usize)> = None;
    for c in floor..=n.saturating_sub(floor) {
        if !m.admissible(c) {
            continue;
        }
        let (Some(a), Some(b)) = (m.block_ssr(0, c, q0), m.block_ssr(c, n, q1)) else {
            continue;
        };
        let ssr = a + b;
        if best.is_none_or(|(s, _)| ssr < s) {
            best = Some((ssr, c));
        }
    }
    best.map(|(_, c)| vec![c])
}

fn best_three_regime(
    m: &SortedMoments,
    orders: &[usize],
    intercept: bool,
    floor: usize,
) -> Option<Vec<usize>> {
    let n = m.len();
    let q: Vec<usize> = orders.iter().map(|&o| regime_width(o, intercept)).collect();
    if n < 3 * floor {
        return None;
    }
    let cuts: Vec<usize> = (floor..=n - floor).filter(|&c| m.admissible(c)).collect();
    let lower: Vec<Option<f64>> = cuts.iter().map(|&c| m.block_ssr(0, c, q[0])).collect();
    let upper: Vec<Option<f64>> = cuts.iter().map(|&c| m.block_ssr(c, n, q[2])).collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &c1) in cuts.iter().enumerate() {
        let Some(lo) = lower[i] else { continue };
        for (k, &c2) in cuts.iter().enumerate().skip(i + 1) {
            if c2 - c1 < floor {
                continue;
            }
            let Some(hi) = upper[k] else { continue };
            let Some(mid) = m.block_ssr(c1, c2, q[1]) else {
                continue;
            };
            let ssr = lo + mid + hi;
            if best.is_none_or(|(s, _, _)| ssr < s) {
                best = Some((ssr, c1, c2));
            }
        }
    }
    best.map(|(_, a, b)| vec![a, b])
}

/// Fits every `(delay, order)` candidate on a common sample and returns the
/// fit with the smallest AIC; ties go to the smaller order, then the smaller delay.
pub fn select_delay_order(y: &[f64], spec: &TarSpec, exog: Option<&ExogSeries>) -> Result<TarFit> {
    spec.validate()?;
    let mut grid = Vec::new();
    for &p in &spec.orders {
        for &d in &spec.delays {
            grid.push((p, d));
        }
    }
    let zs: Vec<(usize, usize, Vec<f64>)> = grid
        .iter()
        .map(|&(p, d)| Ok((p, d, threshold_values(y, &spec.source, exog, d)?)))
        .collect::<Result<_>>()?;
    let mut common = 0;
    for (p, _, z) in &zs {
        common = common.max(natural_start(z, *p)?);
    }
    let searched = spec.delays.len() > 1;
    let results: Vec<Result<TarFit>> = zs
        .par_iter()
        .map(|(p, d, z)| {
            let opts = SearchOptions {
                regimes: spec.regimes,
                trim: spec.trim,
                intercept: spec.intercept,
                regime_orders: spec.regime_orders.clone(),
                start: Some(common),
            };
            let mut fit = threshold_search(y, z, *p, &opts)?;
            fit.source = spec.source.clone();
            fit.delay = *d;
            fit.delay_searched = searched;
            update_information_criteria(&mut fit);
            Ok(fit)
        })
        .collect();
    let mut best: Option<TarFit> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => fit
                        .aic
                        .total_cmp(&b.aic)
                        .then(fit.order.cmp(&b.order))
                        .then(fit.delay.cmp(&b.delay))
                        .is_lt(),
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("grid is nonempty"))
}

/// Regime membership of `y` under fixed thresholds, on the sample `start..`.
pub fn labels_for(fit: &TarFit, z: &[f64], start: usize) -> Result<Vec<usize>> {
    z[start..]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_finite() {
                Ok(fit.regime_of(v))
            } else {
                Err(Error::InsufficientHistory(format!(
                    "threshold variable missing at index {}",
                    start + i
                )))
            }
        })
        .collect()
}

/// Re-estimates coefficients (and, unless frozen, thresholds) on `y` keeping
/// order, delay, regime count and threshold source fixed.
pub fn refit(fit: &TarFit, y: &[f64], exog: Option<&ExogSeries>, freeze_thresholds: bool) -> Result<TarFit> {
    let z = threshold_values(y, &fit.source, exog, fit.delay)?;
    let mut out = if freeze_thresholds {
        let start = natural_start(&z, fit.order)?.max(fit.start);
        let labels = labels_for(fit, &z, start)?;
        let part = ls_given_partition(
            y,
            fit.order,
            &labels,
            fit.num_regimes(),
            fit.intercept,
            Some(&fit.regime_orders),
            start,
        )?;
        let n_eff = labels.len();
        TarFit {
            regimes: part.regimes,
            start,
            labels,
            ssr: part.ssr,
            sigma2: part.ssr / n_eff as f64,
            n_eff,
            ..fit.clone()
        }
    } else {
        let opts = SearchOptions {
            regimes: fit.num_regimes(),
            trim: fit.trim,
            intercept: fit.intercept,
            regime_orders: Some(fit.regime_orders.clone()),
            start: Some(fit.start),
        };
        let mut refit = threshold_search(y, &z, fit.order, &opts)?;
        refit.source = fit.source.clone();
        refit.delay = fit.delay;
        refit.delay_searched = fit.delay_searched;
        refit
    };
    update_information_criteria(&mut out);
    Ok(out)
}

/// Plug-in covariance blocks `ς_ℓ² (X_ℓᵀ X_ℓ)⁻¹` of each regime's coefficient
/// estimate (intercept first when present).
pub fn asymptotic_covariance(fit: &TarFit, y: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    if fit.start + fit.labels.len() != y.len() {
        return Err(Error::Shape(format!(
            "fit covers {} points from {}, series has {}",
            fit.labels.len(),
            fit.start,
            y.len()
        )));
    }
    let design = Design::new(y, fit.order, fit.intercept, fit.start);
    fit.regimes
        .iter()
        .enumerate()
        .map(|(l, reg)| {
            let q = regime_width(fit.regime_orders[l], fit.intercept);
            if reg.count <= q {
                return Err(Error::RankDeficient(format!(
                    "regime {} has {} observations for {q} coefficients",
                    l + 1,
                    reg.count
                )));
            }
            let mut g = DMatrix::<f64>::zeros(q, q);
            for (i, &lab) in fit.labels.iter().enumerate() {
                if lab != l {
                    continue;
                }
                let x = &design.x[i][..q];
                for a in 0..q {
                    for b in 0..q {
                        g[(a, b)] += x[a] * x[b];
                    }
                }
            }
            let inv = spd_inverse(&g).ok_or_else(|| {
                Error::RankDeficient(format!("regime {} moment matrix is singular", l + 1))
            })?;
            let mut cov = inv * (reg.noise_scale * reg.noise_scale);
            // Exact symmetry for downstream Cholesky users.
            cov = (&cov + cov.transpose()) * 0.5;
            Ok(cov)
        })
        .collect()
}

/// One-step forecast from `lags = (y_t, y_{t-1}, …)` and the threshold value
/// governing `y_{t+1}`.
pub fn tar_forecast(fit: &TarFit, lags: &[f64], threshold_value: f64) -> Result<f64> {
    if lags.len() < fit.order {
        return Err(Error::InsufficientHistory(format!(
            "need {} lags, got {}",
            fit.order,
            lags.len()
        )));
    }
    if !threshold_value.is_finite() {
        return Err(Error::InsufficientHistory("threshold value unavailable".into()));
    }
    let reg = &fit.regimes[fit.regime_of(threshold_value)];
    Ok(reg.intercept
        + reg
            .coefficients
            .iter()
            .zip(lags)
            .map(|(c, x)| c * x)
            .sum::<f64>())
}

/// Forecast of `y_{t+1}` from `y[..=t]`.
pub fn forecast_next(fit: &TarFit, y: &[f64], t: usize, exog: Option<&ExogSeries>) -> Result<f64> {
    if t + 1 < fit.order || t >= y.len() {
        return Err(Error::InsufficientHistory(format!(
            "cannot forecast from time {t} with order {}",
            fit.order
        )));
    }
    let z = threshold_value_at(&y[..=t], &fit.source, exog, fit.delay, t + 1).ok_or_else(|| {
        Error::InsufficientHistory(format!(
            "threshold value for time {} unavailable (delay {})",
            t + 1,
            fit.delay
        ))
    })?;
    let lags: Vec<f64> = (0..fit.order).map(|l| y[t - l]).collect();
    tar_forecast(fit, &lags, z)
}
