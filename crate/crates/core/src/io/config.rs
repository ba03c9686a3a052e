//! Run configuration read from TOML, with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cp::{CpOptions, Refinement};
use crate::error::{Error, Result};
use crate::io::panel::{IngestOptions, ThresholdExpr};
use crate::pipeline::RefitPolicy;
use crate::simulation::StudyGrid;
use crate::tar::{TarSpec, ThresholdSource};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: Option<DataConfig>,
    pub model: ModelConfig,
    pub exog: Option<ThresholdExpr>,
    pub forecast: ForecastConfig,
    pub evaluate: EvaluateConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub ingest: IngestOptions,
}

/// `rank = 3` or `rank = "auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSetting {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for RankSetting {
    fn default() -> Self {
        RankSetting::Auto(AutoTag::Auto)
    }
}

impl std::str::FromStr for RankSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(RankSetting::default());
        }
        s.parse()
            .map(RankSetting::Fixed)
            .map_err(|_| format!("expected a positive integer or 'auto', got '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub rank: RankSetting,
    /// Largest rank considered by the eigen-ratio rule.
    pub rank_max: usize,
    pub lag: usize,
    pub regimes: usize,
    pub orders: Vec<usize>,
    /// Candidate delays of a self-exciting threshold.
    pub delays: Vec<usize>,
    /// `"self"` or `"exog:NAME"`.
    pub threshold: String,
    /// Candidate delays of an exogenous threshold.
    pub exog_delays: Vec<usize>,
    pub trim: f64,
    pub intercept: bool,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub refinement: Refinement,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let cp = CpOptions::default();
        let tar = TarSpec::default();
        Self {
            rank: RankSetting::default(),
            rank_max: 8,
            lag: 1,
            regimes: tar.regimes,
            orders: tar.orders,
            delays: tar.delays,
            threshold: "self".into(),
            exog_delays: vec![1],
            trim: tar.trim,
            intercept: tar.intercept,
            restarts: cp.restarts,
            tol: cp.tol,
            max_iter: cp.max_iter,
            refinement: cp.refinement,
        }
    }
}

/// `frozen` or `params`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    #[default]
    Frozen,
    Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Observations used for fitting; the rest are forecast one step at a time.
    pub train_end: Option<usize>,
    pub refit: RefitMode,
    /// Under `params`, keep thresholds at their fitted values.
    pub freeze_thresholds: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            train_end: None,
            refit: RefitMode::Frozen,
            freeze_thresholds: true,
        }
    }
}

impl ForecastConfig {
    pub fn policy(&self) -> RefitPolicy {
        match self.refit {
            RefitMode::Frozen => RefitPolicy::Frozen,
            RefitMode::Params => RefitPolicy::RefitParams {
                freeze_thresholds: self.freeze_thresholds,
            },
        }
    }
}

/// Entries whose mode-`mode` index lies in `indices`; both one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub name: String,
    pub mode: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub subsets: Vec<SubsetConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dims: Vec<Vec<usize>>,
    pub snr: Vec<f64>,
    pub t: Vec<usize>,
    pub replicates: usize,
    pub horizon: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let g = StudyGrid::reference(100, 0);
        Self {
            dims: g.dims,
            snr: g.snr,
            t: g.t,
            replicates: g.replicates,
            horizon: g.horizon,
        }
    }
}

/// Values given on the command line; each replaces the matching file key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub rank: Option<RankSetting>,
    pub lag: Option<usize>,
    pub regimes: Option<usize>,
    pub delay_set: Option<Vec<usize>>,
    pub order_set: Option<Vec<usize>>,
    pub threshold: Option<String>,
    pub exog_delay: Option<Vec<usize>>,
    pub train_end: Option<usize>,
    pub refit: Option<RefitMode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub replicates: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    /// Reads `path`; relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_at(path))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.data.as_mut(), path.parent()) {
            if data.path.is_relative() {
                data.path = dir.join(&data.path);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let m = &mut self.model;
        if let Some(v) = o.rank {
            m.rank = v;
        }
        if let Some(v) = o.lag {
            m.lag = v;
        }
        if let Some(v) = o.regimes {
            m.regimes = v;
        }
        if let Some(v) = &o.delay_set {
            m.delays.clone_from(v);
        }
        if let Some(v) = &o.order_set {
            m.orders.clone_from(v);
        }
        if let Some(v) = &o.threshold {
            m.threshold.clone_from(v);
        }
        if let Some(v) = &o.exog_delay {
            m.exog_delays.clone_from(v);
        }
        if let Some(v) = o.train_end {
            self.forecast.train_end = Some(v);
        }
        if let Some(v) = o.refit {
            self.forecast.refit = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.replicates {
            self.simulate.replicates = v;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn threshold_source(&self) -> Result<ThresholdSource> {
        parse_threshold(&self.model.threshold).map_err(|e| Error::Config(vec![e]))
    }

    pub fn tar_spec(&self) -> Result<TarSpec> {
        let source = self.threshold_source()?;
        let delays = match source {
            ThresholdSource::SelfExciting => self.model.delays.clone(),
            ThresholdSource::Exogenous(_) => self.model.exog_delays.clone(),
        };
        let spec = TarSpec {
            regimes: self.model.regimes,
            orders: self.model.orders.clone(),
            delays,
            source,
            trim: self.model.trim,
            intercept: self.model.intercept,
            regime_orders: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cp_options(&self) -> CpOptions {
        CpOptions {
            tol: self.model.tol,
            max_iter: self.model.max_iter,
            restarts: self.model.restarts,
            seed: self.seed,
            refinement: self.model.refinement,
        }
    }

    /// Every problem with the settings a fit or forecast needs.
    pub fn validate_model(&self) -> Result<()> {
        let mut p = Vec::new();
        let m = &self.model;
        if self.data.is_none() {
            p.push("data.path is required".to_string());
        }
        match m.rank {
            RankSetting::Fixed(0) => p.push("model.rank must be at least 1".into()),
            RankSetting::Auto(_) if m.rank_max == 0 => p.push("model.rank_max must be at least 1".into()),
            _ => {}
        }
        if m.lag == 0 {
            p.push("model.lag must be at least 1".into());
        }
        if !(1..=3).contains(&m.regimes) {
            p.push(format!("model.regimes must be 1, 2 or 3, got {}", m.regimes));
        }
        if m.orders.is_empty() || m.orders.contains(&0) {
            p.push(format!("model.orders must be a nonempty set of positive orders, got {:?}", m.orders));
        }
        if !(m.trim > 0.0 && m.trim < 0.5) {
            p.push(format!("model.trim must lie in (0, 0.5), got {}", m.trim));
        }
        if !(m.tol > 0.0) {
            p.push(format!("model.tol must be positive, got {}", m.tol));
        }
        if m.max_iter == 0 {
            p.push("model.max_iter must be at least 1".into());
        }
        match parse_threshold(&m.threshold) {
            Err(e) => p.push(e),
            Ok(ThresholdSource::SelfExciting) => {
                if m.delays.is_empty() || m.delays.contains(&0) {
                    p.push(format!("model.delays must be a nonempty set of positive delays, got {:?}", m.delays));
                }
            }
            Ok(ThresholdSource::Exogenous(name)) => {
                if m.exog_delays.is_empty() {
                    p.push("model.exog_delays must be nonempty".into());
                }
                match &self.exog {
                    None => p.push(format!("exog must define the threshold series '{name}'")),
                    Some(e) if e.name != name => p.push(format!(
                        "exog.name is '{}' but model.threshold asks for '{name}'",
                        e.name
                    )),
                    _ => {}
                }
            }
        }
        if self.forecast.train_end == Some(0) {
            p.push("forecast.train_end must be at least 1".into());
        }
        for (i, s) in self.evaluate.subsets.iter().enumerate() {
            if s.mode == 0 || s.mode > 2 {
                p.push(format!("evaluate.subsets[{i}].mode must be 1 or 2, got {}", s.mode));
            }
            if s.indices.is_empty() || s.indices.contains(&0) {
                p.push(format!("evaluate.subsets[{i}].indices must be nonempty and one-based"));
            }
        }
        finish(p)
    }

    /// Checks that depend on the ingested panel.
    pub fn validate_against(&self, shape: [usize; 2], len: usize) -> Result<()> {
        let mut p = Vec::new();
        let dmin = shape[0].min(shape[1]);
        if let RankSetting::Fixed(r) = self.model.rank {
            if r > dmin {
                p.push(format!("model.rank {r} exceeds the smallest panel dimension {dmin}"));
            }
        }
        if let Some(n) = self.forecast.train_end {
            if n > len {
                p.push(format!("forecast.train_end {n} exceeds the {len} available observations"));
            }
        }
        for (i, s) in self.evaluate.subsets.iter().enumerate() {
            if (1..=2).contains(&s.mode) {
                let d = shape[s.mode - 1];
                if let Some(bad) = s.indices.iter().find(|&&x| x > d) {
                    p.push(format!("evaluate.subsets[{i}].indices has {bad} beyond mode length {d}"));
                }
            }
        }
        finish(p)
    }

    pub fn validate_simulate(&self) -> Result<()> {
        let s = &self.simulate;
        let mut p = Vec::new();
        if s.dims.is_empty() || s.dims.iter().any(|d| d.len() != 2 || d.iter().any(|&x| x < 3)) {
            p.push(format!("simulate.dims must list pairs of dimensions of at least 3, got {:?}", s.dims));
        }
        if s.snr.is_empty() || s.snr.iter().any(|&x| !(x > 0.0)) {
            p.push(format!("simulate.snr must list positive ratios, got {:?}", s.snr));
        }
        if s.t.is_empty() || s.t.iter().any(|&x| x <= 20) {
            p.push(format!("simulate.t must list sample sizes above 20, got {:?}", s.t));
        }
        if s.replicates == 0 {
            p.push("simulate.replicates must be at least 1".into());
        }
        if s.horizon < 2 {
            p.push(format!("simulate.horizon must be at least 2, got {}", s.horizon));
        }
        finish(p)
    }

    pub fn study_grid(&self) -> StudyGrid {
        StudyGrid {
            dims: self.simulate.dims.clone(),
            snr: self.simulate.snr.clone(),
            t: self.simulate.t.clone(),
            replicates: self.simulate.replicates,
            horizon: self.simulate.horizon,
            seed: self.seed,
        }
    }
}

fn finish(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// `self` or `exog:NAME`.
pub fn parse_threshold(s: &str) -> std::result::Result<ThresholdSource, String> {
    match s.split_once(':') {
        None if s == "self" => Ok(ThresholdSource::SelfExciting),
        Some(("exog", name)) if !name.is_empty() => Ok(ThresholdSource::Exogenous(name.to_string())),
        _ => Err(format!("model.threshold must be 'self' or 'exog:NAME', got '{s}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.model.lag, 1);
        assert_eq!(cfg.model.rank, RankSetting::default());
        assert_eq!(cfg.forecast.policy(), RefitPolicy::Frozen);
    }

    #[test]
    fn validation_lists_every_key() {
        let cfg = RunConfig::from_toml(
            "[model]\nrank = 0\nlag = 0\nregimes = 4\ntrim = 0.7\nthreshold = \"exog:gdp\"\n",
        )
        .unwrap();
        let Err(Error::Config(p)) = cfg.validate_model() else {
            panic!("expected config error");
        };
        for key in ["data.path", "model.rank", "model.lag", "model.regimes", "model.trim", "exog"] {
            assert!(p.iter().any(|m| m.starts_with(key)), "{key} missing from {p:?}");
        }
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = RunConfig::from_toml("seed = 3\n[model]\nrank = 2\nlag = 2\n").unwrap();
        cfg.apply(&Overrides {
            rank: Some("auto".parse().unwrap()),
            seed: Some(9),
            order_set: Some(vec![1, 2]),
            ..Default::default()
        });
        assert_eq!(cfg.model.rank, RankSetting::default());
        assert_eq!(cfg.model.lag, 2);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model.orders, vec![1, 2]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[model]\nrnak = 2\n"), Err(Error::Config(_))));
    }

    #[test]
    fn threshold_strings() {
        assert_eq!(parse_threshold("self"), Ok(ThresholdSource::SelfExciting));
        assert_eq!(parse_threshold("exog:z"), Ok(ThresholdSource::Exogenous("z".into())));
        assert!(parse_threshold("exog:").is_err());
        assert!(parse_threshold("other").is_err());
    }
}
