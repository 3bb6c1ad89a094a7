//! Artifact readers and writers. Every file starts with a `# seed: N`
//! comment so a run can be reproduced from any of its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::DateTime;

use crate::CliError;
use windcast_core::emd::ImfSet;
use windcast_core::nets::TrainReport;
use windcast_core::series::TimeSeries;

pub fn format_ts(epoch_secs: i64) -> String {
    DateTime::from_timestamp(epoch_secs, 0)
        .expect("valid epoch timestamp")
        .format("%Y-%m-%dT%H:%M:%S")
        .to_string()
}

pub fn parse_ts(text: &str) -> Result<i64, CliError> {
    chrono::NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S")
        .map(|t| t.and_utc().timestamp())
        .map_err(|e| CliError::Input(format!("bad timestamp `{text}`: {e}")))
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("failed to read {}: {e}", path.display())))
}

pub fn write_series_csv(path: &Path, series: &TimeSeries, seed: u64) -> Result<(), CliError> {
    let mut out = format!("# seed: {seed}\ntimestamp,ws\n");
    for (&ts, &v) in series.timestamps().iter().zip(series.values()) {
        let _ = writeln!(out, "{},{}", format_ts(ts), v);
    }
    write_file(path, &out)
}

pub fn write_imfs_csv(path: &Path, set: &ImfSet, seed: u64) -> Result<(), CliError> {
    let mut out = format!("# seed: {seed}\n");
    out.push('t');
    for k in 1..=set.num_imfs() {
        let _ = write!(out, ",imf_{k}");
    }
    out.push_str(",residual\n");
    for t in 0..set.source_len() {
        let _ = write!(out, "{t}");
        for imf in &set.imfs {
            let _ = write!(out, ",{}", imf[t]);
        }
        let _ = writeln!(out, ",{}", set.residual[t]);
    }
    write_file(path, &out)
}

pub fn write_losses_csv(path: &Path, curves: &[TrainReport], seed: u64) -> Result<(), CliError> {
    let mut out = format!("# seed: {seed}\ngroup,epoch,train_loss,val_loss\n");
    for (g, report) in curves.iter().enumerate() {
        for (epoch, (tr, va)) in report
            .train_loss
            .iter()
            .zip(&report.val_loss)
            .enumerate()
        {
            let _ = writeln!(out, "{g},{epoch},{tr},{va}");
        }
    }
    write_file(path, &out)
}

pub fn write_forecast_csv(
    path: &Path,
    origin_timestamps: &[i64],
    predictions: &[Vec<f64>],
    horizon: usize,
    seed: u64,
) -> Result<(), CliError> {
    let mut out = format!("# seed: {seed}\ntimestamp");
    for h in 1..=horizon {
        let _ = write!(out, ",h{h}");
    }
    out.push('\n');
    for (&ts, pred) in origin_timestamps.iter().zip(predictions) {
        let _ = write!(out, "{}", format_ts(ts));
        for v in &pred[..horizon] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Forecast rows: origin timestamps plus one prediction vector per row.
pub struct ForecastFile {
    pub origin_timestamps: Vec<i64>,
    pub predictions: Vec<Vec<f64>>,
    pub horizon: usize,
}

pub fn read_forecast_csv(path: &Path) -> Result<ForecastFile, CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{}: empty forecast file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"timestamp") || cols.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: expected header `timestamp,h1..`, found `{header}`",
            path.display()
        )));
    }
    let horizon = cols.len() - 1;
    let mut origin_timestamps = Vec::new();
    let mut predictions = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != horizon + 1 {
            return Err(CliError::Input(format!(
                "{}: row `{line}` has {} fields, expected {}",
                path.display(),
                fields.len(),
                horizon + 1
            )));
        }
        origin_timestamps.push(parse_ts(fields[0])?);
        let row = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| CliError::Input(format!("{}: bad value `{f}`: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        predictions.push(row);
    }
    Ok(ForecastFile {
        origin_timestamps,
        predictions,
        horizon,
    })
}
