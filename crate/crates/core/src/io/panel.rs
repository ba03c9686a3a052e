//! Long-format panel ingestion, per-indicator transforms and standardization.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tar::ExogSeries;
use crate::tensor::{DenseTensor, TensorSeries};

/// Per-series transform applied before modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// `x_t − x_{t−1}`
    Diff,
    /// `ln x_t − ln x_{t−1}`
    Dln,
    /// `ln x_t − 2 ln x_{t−1} + ln x_{t−2}`
    D2ln,
    /// `x_t / x_{t−1} − 1`
    Gp,
}

impl Transform {
    /// Number of leading observations consumed.
    pub fn order(self) -> usize {
        match self {
            Transform::None => 0,
            Transform::Diff | Transform::Dln | Transform::Gp => 1,
            Transform::D2ln => 2,
        }
    }

    /// Applies the transform; `at(i)` names position `i` for domain errors.
    pub fn apply(self, x: &[f64], at: impl Fn(usize) -> String) -> Result<Vec<f64>> {
        let k = self.order();
        if x.len() <= k {
            return Err(Error::InsufficientData(format!(
                "{} observations cannot take a {self:?} transform",
                x.len()
            )));
        }
        let logs = || -> Result<Vec<f64>> {
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::Domain(format!("log of nonpositive value {v} at {}", at(i))))
                    }
                })
                .collect()
        };
        Ok(match self {
            Transform::None => x.to_vec(),
            Transform::Diff => x.windows(2).map(|w| w[1] - w[0]).collect(),
            Transform::Dln => logs()?.windows(2).map(|w| w[1] - w[0]).collect(),
            Transform::D2ln => logs()?.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect(),
            Transform::Gp => x
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    if w[0] == 0.0 {
                        Err(Error::Domain(format!("growth from zero at {}", at(i))))
                    } else {
                        Ok(w[1] / w[0] - 1.0)
                    }
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Sortable time key: ISO dates and `YYYYQn` quarters, not mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum TimeKey {
    Date(NaiveDate),
    Quarter(i32, u8),
}

fn parse_time(s: &str) -> Option<TimeKey> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(TimeKey::Date(d));
    }
    let (y, q) = s.split_once(['Q', 'q'])?;
    let year: i32 = y.parse().ok()?;
    let quarter: u8 = q.parse().ok()?;
    (y.len() == 4 && (1..=4).contains(&quarter)).then_some(TimeKey::Quarter(year, quarter))
}

/// Raw values as read, before transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Chronologically sorted time labels.
    pub times: Vec<String>,
    /// `values[(row, col)][t]`, row-fastest: index `row + rows.len() * col`.
    pub values: Vec<Vec<f64>>,
}

impl RawPanel {
    pub fn shape(&self) -> [usize; 2] {
        [self.rows.len(), self.cols.len()]
    }

    pub fn series(&self, row: &str, col: &str) -> Result<&[f64]> {
        let i = self.rows.iter().position(|r| r == row);
        let j = self.cols.iter().position(|c| c == col);
        match (i, j) {
            (Some(i), Some(j)) => Ok(&self.values[i + self.rows.len() * j]),
            _ => Err(Error::InvalidArgument(format!("no series for row '{row}', column '{col}'"))),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(crate::error::io_at(path))?;
        Self::from_reader(file)
    }

    /// Reads `time,row,col,value` records; labels keep first-appearance order.
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["time", "row", "col", "value"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Ingest(format!(
                "header must be time,row,col,value, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: Vec<String> = Vec::new();
        let mut cols: Vec<String> = Vec::new();
        let mut times: HashMap<String, TimeKey> = HashMap::new();
        let mut cells: HashMap<(String, usize, usize), f64> = HashMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            let time = rec[0].to_string();
            let key = parse_time(&time)
                .ok_or_else(|| Error::Ingest(format!("line {line}: unrecognised time '{time}'")))?;
            let value: f64 = rec[3]
                .parse()
                .map_err(|_| Error::Ingest(format!("line {line}: value '{}' is not a number", &rec[3])))?;
            if !value.is_finite() {
                return Err(Error::Ingest(format!("line {line}: value '{}' is not finite", &rec[3])));
            }
            let i = label_index(&mut rows, &rec[1]);
            let j = label_index(&mut cols, &rec[2]);
            times.insert(time.clone(), key);
            if cells.insert((time.clone(), i, j), value).is_some() {
                return Err(Error::Ingest(format!(
                    "line {line}: duplicate cell ({time}, {}, {})",
                    &rec[1], &rec[2]
                )));
            }
        }
        if times.is_empty() {
            return Err(Error::Ingest("no data records".into()));
        }
        let mut sorted: Vec<(TimeKey, String)> = times.into_iter().map(|(s, k)| (k, s)).collect();
        sorted.sort();
        if sorted
            .windows(2)
            .any(|w| std::mem::discriminant(&w[0].0) != std::mem::discriminant(&w[1].0) || w[0].0 == w[1].0)
        {
            return Err(Error::Ingest("time labels mix formats or name the same period twice".into()));
        }
        let times: Vec<String> = sorted.into_iter().map(|(_, s)| s).collect();
        let mut values = vec![Vec::with_capacity(times.len()); rows.len() * cols.len()];
        let mut missing = Vec::new();
        for t in &times {
            for j in 0..cols.len() {
                for i in 0..rows.len() {
                    match cells.get(&(t.clone(), i, j)) {
                        Some(&v) => values[i + rows.len() * j].push(v),
                        None => missing.push(format!("({t}, {}, {})", rows[i], cols[j])),
                    }
                }
            }
        }
        if !missing.is_empty() {
            let shown: Vec<_> = missing.iter().take(20).cloned().collect();
            let more = if missing.len() > 20 {
                format!(" and {} more", missing.len() - 20)
            } else {
                String::new()
            };
            return Err(Error::Ingest(format!("missing cells {}{more}", shown.join(", "))));
        }
        Ok(Self {
            rows,
            cols,
            times,
            values,
        })
    }
}

fn label_index(labels: &mut Vec<String>, s: &str) -> usize {
    labels.iter().position(|l| l == s).unwrap_or_else(|| {
        labels.push(s.to_string());
        labels.len() - 1
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub sd: f64,
}

/// Sample mean and standard deviation with the `n − 1` denominator.
pub fn mean_sd(x: &[f64]) -> SeriesStats {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    SeriesStats { mean, sd: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Transform per column label; unlisted columns use `default_transform`.
    #[serde(default)]
    pub transforms: HashMap<String, Transform>,
    #[serde(default)]
    pub default_transform: Transform,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

/// Transformed, window-aligned and optionally standardized matrix panel.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Time labels of the modelled window.
    pub times: Vec<String>,
    pub series: TensorSeries,
    /// Transform per column.
    pub transforms: Vec<Transform>,
    /// Per-entry statistics removed by standardization, row-fastest.
    pub stats: Option<Vec<SeriesStats>>,
    /// Raw observations dropped at the start so every series shares the window.
    pub offset: usize,
    pub raw: RawPanel,
}

impl PanelDataset {
    pub fn shape(&self) -> [usize; 2] {
        self.raw.shape()
    }
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<PanelDataset> {
    build_panel(RawPanel::read(path)?, opts)
}

pub fn build_panel(raw: RawPanel, opts: &IngestOptions) -> Result<PanelDataset> {
    let unknown: Vec<&String> = opts.transforms.keys().filter(|k| !raw.cols.contains(k)).collect();
    if !unknown.is_empty() {
        let mut names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        names.sort_unstable();
        return Err(Error::Ingest(format!("transforms name unknown columns: {}", names.join(", "))));
    }
    let transforms: Vec<Transform> = raw
        .cols
        .iter()
        .map(|c| opts.transforms.get(c).copied().unwrap_or(opts.default_transform))
        .collect();
    let offset = transforms.iter().map(|t| t.order()).max().unwrap_or(0);
    let n = raw.times.len();
    if n <= offset + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} time points leave fewer than two after transforms"
        )));
    }
    let [d1, d2] = raw.shape();
    let mut columns = Vec::with_capacity(d1 * d2);
    for j in 0..d2 {
        for i in 0..d1 {
            let tr = transforms[j];
            let x = &raw.values[i + d1 * j];
            let at = |k: usize| format!("({}, {}, {})", raw.times[k], raw.rows[i], raw.cols[j]);
            let y = tr.apply(x, at)?;
            columns.push(y[offset - tr.order()..].to_vec());
        }
    }
    let stats = if opts.standardize {
        let mut stats = Vec::with_capacity(columns.len());
        for (a, col) in columns.iter_mut().enumerate() {
            let s = mean_sd(col);
            if !(s.sd > 0.0) {
                return Err(Error::Domain(format!(
                    "series ({}, {}) is constant after transformation and cannot be standardized",
                    raw.rows[a % d1],
                    raw.cols[a / d1]
                )));
            }
            col.iter_mut().for_each(|v| *v = (*v - s.mean) / s.sd);
            stats.push(s);
        }
        Some(stats)
    } else {
        None
    };
    let len = n - offset;
    let items = (0..len)
        .map(|t| DenseTensor::new(vec![d1, d2], columns.iter().map(|c| c[t]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(PanelDataset {
        rows: raw.rows.clone(),
        cols: raw.cols.clone(),
        times: raw.times[offset..].to_vec(),
        series: TensorSeries::new(items)?,
        transforms,
        stats,
        offset,
        raw,
    })
}

/// Writes the modelled panel back out in long format.
pub fn write_panel(panel: &PanelDataset, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "row", "col", "value"])?;
    let [d1, d2] = panel.shape();
    for (t, x) in panel.series.iter().enumerate() {
        for j in 0..d2 {
            for i in 0..d1 {
                w.write_record([
                    panel.times[t].as_str(),
                    panel.rows[i].as_str(),
                    panel.cols[j].as_str(),
                    &x.data()[i + d1 * j].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Definition of an exogenous threshold variable taken from the raw panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdExpr {
    pub name: String,
    pub row: String,
    pub col: String,
    #[serde(default)]
    pub transform: Transform,
}

/// The threshold series aligned to the panel window. Earlier transformed
/// values are kept as lead-in so delayed lookups can reach before the
/// window; positions the transform cannot fill are missing.
pub fn make_threshold_series(panel: &PanelDataset, expr: &ThresholdExpr) -> Result<ExogSeries> {
    let raw = panel.raw.series(&expr.row, &expr.col)?;
    let at = |k: usize| format!("({}, {}, {})", panel.raw.times[k], expr.row, expr.col);
    let z = expr.transform.apply(raw, at)?;
    let k = expr.transform.order();
    // Transformed value i belongs to raw time i + k; window time t is raw
    // time t + offset.
    let mut values = vec![f64::NAN; k.saturating_sub(panel.offset)];
    values.extend(z);
    Ok(ExogSeries {
        name: expr.name.clone(),
        values,
        lead_in: panel.offset.saturating_sub(k),
    })
}

impl ExogSeries {
    /// Mean and standard deviation over window points `0..n`.
    pub fn window_stats(&self, n: usize) -> Option<SeriesStats> {
        let vals: Vec<f64> = (0..n.min(self.len())).filter_map(|t| self.at(t, 0)).collect();
        (!vals.is_empty()).then(|| mean_sd(&vals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none(_: usize) -> String {
        String::new()
    }

    #[test]
    fn transform_examples() {
        let e = std::f64::consts::E;
        let d = Transform::Dln.apply(&[1.0, e, e * e], none).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        assert_eq!(Transform::Gp.apply(&[1.0, 2.0, 4.0, 8.0], none).unwrap(), vec![1.0, 1.0, 1.0]);
        let d2 = Transform::D2ln.apply(&[1.0, e, e.powi(3)], none).unwrap();
        assert_eq!(d2.len(), 1);
        assert!((d2[0] - 1.0).abs() < 1e-14);
        assert_eq!(Transform::Diff.apply(&[1.0, 4.0, 2.0], none).unwrap(), vec![3.0, -2.0]);
        let err = Transform::Dln.apply(&[1.0, 0.0], |i| format!("pos {i}")).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("pos 1")));
    }

    #[test]
    fn quarter_labels_sort() {
        assert!(parse_time("1990Q4").unwrap() < parse_time("1991Q1").unwrap());
        assert!(parse_time("1990Q5").is_none());
        assert!(parse_time("2001-02-30").is_none());
        assert!(parse_time("2001-02-28").is_some());
    }

    const SMALL: &str = "time,row,col,value\n\
        2000Q2,A,x,2\n2000Q1,A,x,1\n2000Q3,A,x,4\n\
        2000Q1,B,x,3\n2000Q2,B,x,5\n2000Q3,B,x,6\n\
        2000Q1,A,y,1\n2000Q2,A,y,2\n2000Q3,A,y,4\n\
        2000Q1,B,y,8\n2000Q2,B,y,8\n2000Q3,B,y,7\n";

    #[test]
    fn reads_and_aligns() {
        let raw = RawPanel::from_reader(SMALL.as_bytes()).unwrap();
        assert_eq!(raw.times, ["2000Q1", "2000Q2", "2000Q3"]);
        assert_eq!(raw.rows, ["A", "B"]);
        assert_eq!(raw.series("A", "x").unwrap(), &[1.0, 2.0, 4.0]);
        let opts = IngestOptions {
            transforms: HashMap::from([("y".to_string(), Transform::Gp)]),
            default_transform: Transform::None,
            standardize: false,
        };
        let p = build_panel(raw, &opts).unwrap();
        assert_eq!(p.times, ["2000Q2", "2000Q3"]);
        assert_eq!(p.series.items()[0].data(), &[2.0, 5.0, 1.0, 0.0]);
        assert_eq!(p.series.items()[1].get(&[1, 1]).unwrap(), -0.125);
    }

    #[test]
    fn missing_cell_is_listed() {
        let text = SMALL.replace("2000Q2,B,x,5\n", "");
        let err = RawPanel::from_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingest(ref m) if m.contains("(2000Q2, B, x)")), "{err}");
    }

    #[test]
    fn standardized_moments() {
        let raw = RawPanel::from_reader(SMALL.as_bytes()).unwrap();
        let p = build_panel(raw, &IngestOptions { standardize: true, ..Default::default() }).unwrap();
        for a in 0..4 {
            let col: Vec<f64> = p.series.iter().map(|x| x.data()[a]).collect();
            let s = mean_sd(&col);
            assert!(s.mean.abs() < 1e-12 && (s.sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_series_alignment() {
        let e = std::f64::consts::E;
        let raw = RawPanel {
            rows: vec!["A".into()],
            cols: vec!["x".into()],
            times: vec!["2000Q1".into(), "2000Q2".into(), "2000Q3".into()],
            values: vec![vec![1.0, e, e * e]],
        };
        let p = build_panel(raw, &IngestOptions { standardize: false, ..Default::default() }).unwrap();
        let ident = ThresholdExpr { name: "z".into(), row: "A".into(), col: "x".into(), transform: Transform::None };
        let z = make_threshold_series(&p, &ident).unwrap();
        assert_eq!((0..3).map(|t| z.at(t, 0).unwrap()).collect::<Vec<_>>(), vec![1.0, e, e * e]);
        let growth = ThresholdExpr { transform: Transform::Dln, ..ident };
        let z = make_threshold_series(&p, &growth).unwrap();
        // Third observation, delay one: the growth into the second.
        assert!((z.at(2, 1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(z.at(0, 0), None);
    }
}
