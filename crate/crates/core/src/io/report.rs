//! Delimited result files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::pipeline::{ForecastRecord, ForecastSummary};
use crate::simulation::{StudyRow, STUDY_HEADER};
use crate::tensor::DenseTensor;

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// `t,f1..fr,sq_err_obs,sq_err_signal`, one row per forecast origin.
pub fn write_forecasts(records: &[ForecastRecord], out: impl Write) -> Result<()> {
    let r = records.first().map_or(0, |rec| rec.factor_forecasts.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=r).map(|j| format!("f{j}")));
    header.extend(["sq_err_obs".into(), "sq_err_signal".into()]);
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![rec.t.to_string()];
        row.extend(rec.factor_forecasts.iter().map(f64::to_string));
        row.push(rec.sq_err_obs.to_string());
        row.push(opt(rec.sq_err_signal));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-entry forecasts and residuals in long format:
/// `t,row,col,forecast,residual` with one-based entry indices.
pub fn write_forecast_entries(records: &[ForecastRecord], shape: &[usize], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "row", "col", "forecast", "residual"])?;
    let d1 = shape[0];
    for rec in records {
        for (a, (f, e)) in rec.forecast.data().iter().zip(rec.residual.data()).enumerate() {
            w.write_record([
                rec.t.to_string(),
                (a % d1 + 1).to_string(),
                (a / d1 + 1).to_string(),
                f.to_string(),
                e.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Ingest(format!("{what}: '{s}' is not a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Ingest(format!("{what}: '{s}' is not an index")))
}

/// Rebuilds forecast records from the two files written by the forecast command.
pub fn read_forecasts(summary: impl Read, entries: impl Read, shape: &[usize]) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_reader(summary);
    let headers = rdr.headers()?.clone();
    let r = headers.len().checked_sub(3).ok_or_else(|| Error::Ingest("forecast file header too short".into()))?;
    let mut records = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_usize(&rec[0], "forecast t")?;
        let factor_forecasts = (1..=r)
            .map(|j| parse_f64(&rec[j], "factor forecast"))
            .collect::<Result<Vec<_>>>()?;
        let sq_err_obs = parse_f64(&rec[r + 1], "sq_err_obs")?;
        let sq_err_signal = match &rec[r + 2] {
            "" => None,
            s => Some(parse_f64(s, "sq_err_signal")?),
        };
        let zeros = DenseTensor::zeros(shape)?;
        records.insert(
            t,
            ForecastRecord {
                t,
                factor_forecasts,
                forecast: zeros.clone(),
                residual: zeros,
                sq_err_obs,
                sq_err_signal,
            },
        );
    }
    let d1 = shape[0];
    let mut rdr = csv::Reader::from_reader(entries);
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_usize(&rec[0], "entry t")?;
        let i = parse_usize(&rec[1], "entry row")?;
        let j = parse_usize(&rec[2], "entry col")?;
        let target = records
            .get_mut(&t)
            .ok_or_else(|| Error::Ingest(format!("entry for unknown forecast origin {t}")))?;
        if i == 0 || j == 0 || i > d1 || j > shape[1] {
            return Err(Error::Ingest(format!("entry ({i}, {j}) outside shape {shape:?}")));
        }
        let a = (i - 1) + d1 * (j - 1);
        target.forecast.data_mut()[a] = parse_f64(&rec[3], "entry forecast")?;
        target.residual.data_mut()[a] = parse_f64(&rec[4], "entry residual")?;
    }
    Ok(records.into_values().collect())
}

pub fn write_study(rows: &[StudyRow], out: impl Write) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "{STUDY_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv_line())?;
    }
    out.flush()?;
    Ok(())
}

/// `subset,size,mse` with an `all` row first.
pub fn write_summary(summary: &ForecastSummary, entries: usize, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subset", "size", "steps", "mse_per_entry", "mse_total", "mse_signal"])?;
    w.write_record([
        "all".to_string(),
        entries.to_string(),
        summary.steps.to_string(),
        summary.mse_obs_per_entry.to_string(),
        summary.mse_obs.to_string(),
        opt(summary.mse_signal),
    ])?;
    for s in &summary.subsets {
        w.write_record([
            s.name.clone(),
            s.size.to_string(),
            summary.steps.to_string(),
            s.mse_per_entry.to_string(),
            (s.mse_per_entry * s.size as f64).to_string(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
