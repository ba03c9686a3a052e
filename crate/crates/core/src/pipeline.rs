//! Two-stage fitting and rolling one-step forecasting.

use serde::{Deserialize, Serialize};

use crate::cp::{self, CpModel, CpOptions, FactorPanel};
use crate::error::{Error, Result};
use crate::tar::{self, ExogSeries, TarFit, TarSpec, ThresholdSource};
use crate::tensor::{DenseTensor, TensorSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtfmModel {
    pub cp: CpModel,
    /// One threshold autoregression per factor, in factor order. Each fit
    /// records its own threshold source and delay.
    pub tars: Vec<TarFit>,
    pub lag: usize,
}

impl TtfmModel {
    pub fn rank(&self) -> usize {
        self.cp.rank()
    }
}

#[derive(Debug, Clone)]
pub struct TtfmFit {
    pub model: TtfmModel,
    pub factors: FactorPanel,
    pub cp_converged: bool,
    pub cp_iterations: usize,
}

/// Stage one on `series`, then a threshold autoregression per extracted factor.
///
/// `specs` holds either one spec shared by all factors or one per factor.
pub fn fit_ttfm(
    series: &TensorSeries,
    r: usize,
    h: usize,
    specs: &[TarSpec],
    exog: Option<&ExogSeries>,
    cp_opts: &CpOptions,
) -> Result<TtfmFit> {
    if specs.len() != 1 && specs.len() != r {
        return Err(Error::InvalidArgument(format!(
            "{} TAR specs for {r} factors",
            specs.len()
        )));
    }
    for spec in specs {
        check_exog_binding(&spec.source, exog)?;
    }
    let cp_fit = cp::fit_cp(series, r, h, cp_opts)?;
    let mut panel = cp::extract_factors(series, &cp_fit.model)?;
    panel.exog = exog.cloned();
    let tars = panel
        .factors
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let spec = if specs.len() == 1 { &specs[0] } else { &specs[j] };
            tar::select_delay_order(f, spec, exog)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TtfmFit {
        model: TtfmModel {
            cp: cp_fit.model,
            tars,
            lag: h,
        },
        factors: panel,
        cp_converged: cp_fit.converged,
        cp_iterations: cp_fit.iterations,
    })
}

fn check_exog_binding(source: &ThresholdSource, exog: Option<&ExogSeries>) -> Result<()> {
    if let ThresholdSource::Exogenous(name) = source {
        match exog {
            Some(z) if &z.name == name => {}
            Some(z) => {
                return Err(Error::InvalidArgument(format!(
                    "threshold series '{name}' requested, '{}' supplied",
                    z.name
                )))
            }
            None => {
                return Err(Error::InvalidArgument(format!(
                    "threshold series '{name}' not supplied"
                )))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefitPolicy {
    /// Every parameter stays at its initial estimate.
    #[default]
    Frozen,
    /// TAR coefficients are re-estimated on data through `t` before each
    /// forecast; loadings, orders, delays and regime count stay fixed.
    RefitParams { freeze_thresholds: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    /// Forecast origin: data through `t` predicts `t + 1`.
    pub t: usize,
    pub factor_forecasts: Vec<f64>,
    pub forecast: DenseTensor,
    /// `forecast - X_{t+1}`.
    pub residual: DenseTensor,
    pub sq_err_obs: f64,
    pub sq_err_signal: Option<f64>,
}

/// Rolling one-step forecasts from origins `t_start..=t_end`.
///
/// Factors are extracted with the model's loadings throughout. `signal`, when
/// given, is the noiseless part of `series` and adds errors against it.
pub fn rolling_forecast(
    model: &TtfmModel,
    series: &TensorSeries,
    exog: Option<&ExogSeries>,
    t_start: usize,
    t_end: usize,
    policy: RefitPolicy,
    signal: Option<&[DenseTensor]>,
) -> Result<Vec<ForecastRecord>> {
    if t_start > t_end {
        return Err(Error::InvalidArgument(format!(
            "forecast window {t_start}..={t_end} is empty"
        )));
    }
    if t_end + 1 >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "origin {t_end} has no following observation in a series of length {}",
            series.len()
        )));
    }
    if let Some(m) = signal {
        if m.len() < series.len() {
            return Err(Error::Shape(format!(
                "signal has {} points, series has {}",
                m.len(),
                series.len()
            )));
        }
    }
    if model.tars.len() != model.rank() {
        return Err(Error::Shape(format!(
            "{} TAR fits for rank {}",
            model.tars.len(),
            model.rank()
        )));
    }
    for fit in &model.tars {
        if let ThresholdSource::Exogenous(_) = fit.source {
            check_exog_binding(&fit.source, exog)?;
            if fit.delay == 0 {
                return Err(Error::InvalidArgument(
                    "exogenous delay 0 needs the threshold value of the forecast target".into(),
                ));
            }
        }
    }
    let panel = cp::extract_factors(series, &model.cp)?;
    let mut records = Vec::with_capacity(t_end - t_start + 1);
    for t in t_start..=t_end {
        let forecasts = match policy {
            RefitPolicy::Frozen => forecast_factors(&model.tars, &panel, t, exog)?,
            RefitPolicy::RefitParams { freeze_thresholds } => {
                let fits = refit_at(model, &panel, t, exog, freeze_thresholds)?;
                forecast_factors(&fits, &panel, t, exog)?
            }
        };
        let forecast = cp::reconstruct_values(&model.cp, &forecasts)?;
        let target = &series.items()[t + 1];
        let residual = forecast.sub(target)?;
        let sq_err_obs = residual.frobenius_sq();
        let sq_err_signal = signal
            .map(|m| forecast.sub(&m[t + 1]).map(|e| e.frobenius_sq()))
            .transpose()?;
        records.push(ForecastRecord {
            t,
            factor_forecasts: forecasts,
            forecast,
            residual,
            sq_err_obs,
            sq_err_signal,
        });
    }
    Ok(records)
}

fn forecast_factors(
    fits: &[TarFit],
    panel: &FactorPanel,
    t: usize,
    exog: Option<&ExogSeries>,
) -> Result<Vec<f64>> {
    fits.iter()
        .zip(&panel.factors)
        .map(|(fit, f)| tar::forecast_next(fit, f, t, exog))
        .collect()
}

/// TAR fits re-estimated on factor values `0..=t`.
pub fn refit_at(
    model: &TtfmModel,
    panel: &FactorPanel,
    t: usize,
    exog: Option<&ExogSeries>,
    freeze_thresholds: bool,
) -> Result<Vec<TarFit>> {
    model
        .tars
        .iter()
        .zip(&panel.factors)
        .map(|(fit, f)| {
            if t >= f.len() {
                return Err(Error::InvalidArgument(format!(
                    "refit origin {t} beyond factor length {}",
                    f.len()
                )));
            }
            tar::refit(fit, &f[..=t], exog, freeze_thresholds)
        })
        .collect()
}

/// A named set of tensor entries, as a mask over the flattened layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EntrySubset {
    pub name: String,
    pub mask: Vec<bool>,
}

impl EntrySubset {
    /// Entries whose mode-`k` coordinate is in `indices` (zero-based).
    pub fn along_mode(name: impl Into<String>, shape: &[usize], k: usize, indices: &[usize]) -> Result<Self> {
        if k >= shape.len() {
            return Err(Error::InvalidArgument(format!("mode {k} out of range for {shape:?}")));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= shape[k]) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} outside mode {k} of length {}",
                shape[k]
            )));
        }
        let stride: usize = shape[..k].iter().product();
        let d: usize = shape.iter().product();
        let mask = (0..d).map(|a| indices.contains(&((a / stride) % shape[k]))).collect();
        Ok(Self {
            name: name.into(),
            mask,
        })
    }

    pub fn size(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSummary {
    pub name: String,
    pub size: usize,
    /// Mean over steps of the per-entry squared error within the subset.
    pub mse_per_entry: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSummary {
    pub steps: usize,
    /// Mean over steps of `‖X̂_t(1) − X_{t+1}‖²_F`.
    pub mse_obs: f64,
    pub mse_signal: Option<f64>,
    /// `mse_obs` divided by the number of tensor entries.
    pub mse_obs_per_entry: f64,
    pub per_step: Vec<f64>,
    pub subsets: Vec<SubsetSummary>,
}

pub fn evaluate_forecasts(records: &[ForecastRecord], subsets: &[EntrySubset]) -> Result<ForecastSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no forecast records to evaluate".into()))?;
    let n = records.len() as f64;
    let d = first.residual.len();
    let per_step: Vec<f64> = records.iter().map(|r| r.sq_err_obs).collect();
    let mse_obs = per_step.iter().sum::<f64>() / n;
    let mse_signal = records
        .iter()
        .map(|r| r.sq_err_signal)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    let subsets = subsets
        .iter()
        .map(|s| {
            if s.mask.len() != d {
                return Err(Error::Shape(format!(
                    "subset '{}' has {} entries, tensors have {d}",
                    s.name,
                    s.mask.len()
                )));
            }
            let size = s.size();
            if size == 0 {
                return Err(Error::InvalidArgument(format!("subset '{}' is empty", s.name)));
            }
            let total: f64 = records
                .iter()
                .map(|r| {
                    r.residual
                        .data()
                        .iter()
                        .zip(&s.mask)
                        .filter(|(_, &m)| m)
                        .map(|(e, _)| e * e)
                        .sum::<f64>()
                })
                .sum();
            Ok(SubsetSummary {
                name: s.name.clone(),
                size,
                mse_per_entry: total / (n * size as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastSummary {
        steps: records.len(),
        mse_obs,
        mse_signal,
        mse_obs_per_entry: mse_obs / d as f64,
        per_step,
        subsets,
    })
}
