//! The `ttfm` command: argument parsing and the four subcommands.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cp;
use crate::error::{io_at, Error, Result};
use crate::io::config::{Overrides, RankSetting, RefitMode, RunConfig};
use crate::io::model_file::{ExogInfo, ModelFile, FORMAT_VERSION};
use crate::io::panel::{self, PanelDataset};
use crate::io::report;
use crate::pipeline::{self, EntrySubset};
use crate::simulation;
use crate::tar::{ExogSeries, ThresholdSource};

#[derive(Debug, Parser)]
#[command(name = "ttfm", version, about = "Threshold tensor factor models in CP form")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model on the training window and write model.json.
    Fit(CommonArgs),
    /// Rolling one-step forecasts over the held-out observations.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        /// Model file; defaults to OUT/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the simulation study grid.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Summarize forecast errors, optionally by entry subsets.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding forecasts.csv and forecast_entries.csv; defaults to OUT.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of factors, or `auto` for the eigen-ratio rule.
    #[arg(long)]
    pub rank: Option<RankSetting>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub regimes: Option<usize>,
    /// Candidate self-exciting delays, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub delay_set: Option<Vec<usize>>,
    /// Candidate AR orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub order_set: Option<Vec<usize>>,
    /// `self` or `exog:NAME`.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Candidate exogenous delays, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exog_delay: Option<Vec<usize>>,
    /// Number of observations used for fitting.
    #[arg(long)]
    pub train_end: Option<usize>,
    #[arg(long, value_enum)]
    pub refit: Option<RefitMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            rank: self.rank,
            lag: self.lag,
            regimes: self.regimes,
            delay_set: self.delay_set.clone(),
            order_set: self.order_set.clone(),
            threshold: self.threshold.clone(),
            exog_delay: self.exog_delay.clone(),
            train_end: self.train_end,
            refit: self.refit,
            seed: self.seed,
            out: self.out.clone(),
            replicates: None,
        }
    }

    /// The configuration file, if any, with command-line values applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

/// What a command produced.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Fit(common) => cmd_fit(&common.resolve()?),
        Command::Forecast { common, model } => {
            let cfg = common.resolve()?;
            let model = model.clone().unwrap_or_else(|| cfg.out_dir().join("model.json"));
            cmd_forecast(&cfg, &model)
        }
        Command::Simulate { common, replicates } => {
            let mut cfg = common.resolve()?;
            cfg.apply(&Overrides {
                replicates: *replicates,
                ..Default::default()
            });
            cmd_simulate(&cfg)
        }
        Command::Evaluate { common, input } => {
            let cfg = common.resolve()?;
            let input = input.clone().unwrap_or_else(|| cfg.out_dir());
            cmd_evaluate(&cfg, &input)
        }
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(io_at(path))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_at(path))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    Ok(dir)
}

/// Validates the configuration and ingests its panel.
pub fn load_panel(cfg: &RunConfig) -> Result<PanelDataset> {
    cfg.validate_model()?;
    let data = cfg.data.as_ref().expect("validated");
    let panel = panel::ingest(&data.path, &data.ingest)?;
    cfg.validate_against(panel.shape(), panel.series.len())?;
    Ok(panel)
}

fn threshold_series(cfg: &RunConfig, panel: &PanelDataset) -> Result<Option<ExogSeries>> {
    match cfg.threshold_source()? {
        ThresholdSource::SelfExciting => Ok(None),
        ThresholdSource::Exogenous(_) => {
            let expr = cfg.exog.as_ref().expect("validated");
            panel::make_threshold_series(panel, expr).map(Some)
        }
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let panel = load_panel(cfg)?;
    let spec = cfg.tar_spec()?;
    let n = cfg.forecast.train_end.unwrap_or(panel.series.len());
    let train = panel.series.prefix(n)?;
    let exog = threshold_series(cfg, &panel)?;
    let [d1, d2] = panel.shape();
    let r = match cfg.model.rank {
        RankSetting::Fixed(r) => r,
        RankSetting::Auto(_) => cp::select_rank(&train, cfg.model.lag, cfg.model.rank_max.min(d1.min(d2)))?,
    };
    let fit = pipeline::fit_ttfm(&train, r, cfg.model.lag, &[spec], exog.as_ref(), &cfg.cp_options())?;

    let file = ModelFile {
        format_version: FORMAT_VERSION,
        rows: panel.rows.clone(),
        cols: panel.cols.clone(),
        times: panel.times[..n].to_vec(),
        transforms: panel.transforms.clone(),
        standardization: panel.stats.clone(),
        exog: exog.as_ref().map(|z| ExogInfo {
            expr: cfg.exog.clone().expect("validated"),
            window: z.window_stats(n),
        }),
        cp_converged: fit.cp_converged,
        cp_iterations: fit.cp_iterations,
        model: fit.model,
    };
    let dir = out_dir(cfg)?;
    let model_path = dir.join("model.json");
    file.write(&model_path)?;

    let factors_path = dir.join("factors.csv");
    let mut w = csv::Writer::from_writer(create(&factors_path)?);
    let mut header = vec!["t".to_string(), "time".to_string()];
    header.extend((1..=r).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for t in 0..n {
        let mut row = vec![t.to_string(), panel.times[t].clone()];
        row.extend(fit.factors.factors.iter().map(|f| f[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut warnings = Vec::new();
    if !fit.cp_converged {
        warnings.push(format!(
            "loading iterations stopped at max_iter = {} before reaching tol = {}",
            cfg.model.max_iter, cfg.model.tol
        ));
    }
    Ok(Outcome {
        files: vec![model_path, factors_path],
        warnings,
    })
}

pub fn cmd_forecast(cfg: &RunConfig, model_path: &Path) -> Result<Outcome> {
    let panel = load_panel(cfg)?;
    let file = ModelFile::read(model_path)?;
    if file.rows != panel.rows || file.cols != panel.cols {
        return Err(Error::ModelFile("model labels do not match the panel".into()));
    }
    if !panel.times.starts_with(&file.times) {
        return Err(Error::ModelFile("model estimation window is not a prefix of the panel".into()));
    }
    let len = panel.series.len();
    let n = cfg.forecast.train_end.unwrap_or(file.times.len());
    if n == 0 || n >= len {
        return Err(Error::Config(vec![format!(
            "forecast.train_end must leave at least one of the {len} observations for forecasting, got {n}"
        )]));
    }
    let exog = match &file.exog {
        Some(info) => Some(panel::make_threshold_series(&panel, &info.expr)?),
        None => None,
    };
    let records = pipeline::rolling_forecast(
        &file.model,
        &panel.series,
        exog.as_ref(),
        n - 1,
        len - 2,
        cfg.forecast.policy(),
        None,
    )?;
    let dir = out_dir(cfg)?;
    let summary = dir.join("forecasts.csv");
    report::write_forecasts(&records, create(&summary)?)?;
    let entries = dir.join("forecast_entries.csv");
    report::write_forecast_entries(&records, &panel.shape(), create(&entries)?)?;
    Ok(Outcome {
        files: vec![summary, entries],
        warnings: Vec::new(),
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate_simulate()?;
    let rows = simulation::run_study(&cfg.study_grid())?;
    let dir = out_dir(cfg)?;
    let path = dir.join("study.csv");
    report::write_study(&rows, create(&path)?)?;
    Ok(Outcome {
        files: vec![path],
        warnings: Vec::new(),
    })
}

pub fn cmd_evaluate(cfg: &RunConfig, input: &Path) -> Result<Outcome> {
    let entries_path = input.join("forecast_entries.csv");
    let entries_text = std::fs::read_to_string(&entries_path).map_err(io_at(&entries_path))?;
    let mut shape = [0usize; 2];
    let mut rdr = csv::Reader::from_reader(entries_text.as_bytes());
    for rec in rdr.records() {
        let rec = rec?;
        for (k, field) in [1, 2].into_iter().enumerate() {
            let i: usize = rec[field]
                .parse()
                .map_err(|_| Error::Ingest(format!("entry index '{}' is not a number", &rec[field])))?;
            shape[k] = shape[k].max(i);
        }
    }
    if shape.contains(&0) {
        return Err(Error::InsufficientData("forecast_entries.csv has no entries".into()));
    }
    let records = report::read_forecasts(
        open(&input.join("forecasts.csv"))?,
        entries_text.as_bytes(),
        &shape,
    )?;
    let mut problems = Vec::new();
    let subsets: Vec<EntrySubset> = cfg
        .evaluate
        .subsets
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let idx: Vec<usize> = s.indices.iter().map(|&x| x.wrapping_sub(1)).collect();
            match EntrySubset::along_mode(s.name.clone(), &shape, s.mode.wrapping_sub(1), &idx) {
                Ok(sub) => Some(sub),
                Err(e) => {
                    problems.push(format!("evaluate.subsets[{i}]: {e}"));
                    None
                }
            }
        })
        .collect();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let summary = pipeline::evaluate_forecasts(&records, &subsets)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("summary.csv");
    report::write_summary(&summary, shape[0] * shape[1], create(&path)?)?;
    Ok(Outcome {
        files: vec![path],
        warnings: Vec::new(),
    })
}
