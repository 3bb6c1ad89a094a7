//! Validated wind-speed time series: CSV ingestion, normalization,
//! windowing, chronological splits, and a synthetic generator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{rng_for, Domain};

/// Default sampling stride: one hour.
pub const DEFAULT_STRIDE_SECS: i64 = 3600;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const CSV_HEADER: &str = "timestamp,ws";

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected `{CSV_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-uniform stride at sample {index}: expected {expected} s, found {found} s")]
    NonUniformStride {
        index: usize,
        expected: i64,
        found: i64,
    },
    #[error("non-finite value at position {at}")]
    NonFiniteValue { at: usize },
    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("constant series: min equals max ({value})")]
    ConstantSeries { value: f64 },
    #[error("split fractions must be non-negative and sum to 1, got sum {sum}")]
    InvalidFractions { sum: f64 },
    #[error("empty {which} partition (dataset of {len} samples)")]
    EmptySplit { which: &'static str, len: usize },
    #[error("season map leaves month {month} unassigned")]
    IncompleteSeasonMap { month: u32 },
}

/// Uniformly sampled wind-speed series.
///
/// Invariants enforced at construction: at least 2 samples, strictly
/// increasing timestamps with a constant positive stride, finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self, SeriesError> {
        if timestamps.len() != values.len() {
            return Err(SeriesError::MalformedRow {
                line: 0,
                reason: format!("{} timestamps vs {} values", timestamps.len(), values.len()),
            });
        }
        if timestamps.len() < 2 {
            return Err(SeriesError::SeriesTooShort {
                len: timestamps.len(),
                min: 2,
            });
        }
        let stride = timestamps[1] - timestamps[0];
        if stride <= 0 {
            return Err(SeriesError::NonUniformStride {
                index: 1,
                expected: DEFAULT_STRIDE_SECS,
                found: stride,
            });
        }
        for i in 2..timestamps.len() {
            let gap = timestamps[i] - timestamps[i - 1];
            if gap != stride {
                return Err(SeriesError::NonUniformStride {
                    index: i,
                    expected: stride,
                    found: gap,
                });
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFiniteValue { at: i });
        }
        Ok(Self { timestamps, values })
    }

    /// Builds a series from values alone, with equidistant timestamps from
    /// `start`.
    pub fn from_values(values: Vec<f64>, start: i64, stride: i64) -> Result<Self, SeriesError> {
        let timestamps = (0..values.len() as i64).map(|i| start + i * stride).collect();
        Self::new(timestamps, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn stride(&self) -> i64 {
        self.timestamps[1] - self.timestamps[0]
    }

    /// First `len` samples as a new series.
    pub fn prefix(&self, len: usize) -> Result<Self, SeriesError> {
        Self::new(self.timestamps[..len].to_vec(), self.values[..len].to_vec())
    }
}

/// Reads a `timestamp,ws` CSV with ISO-8601 timestamps; rows are sorted by
/// timestamp before validation. Leading `#` comment lines are skipped.
pub fn parse_csv<P: AsRef<Path>>(path: P) -> Result<TimeSeries, SeriesError> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(&path).map_err(|source| SeriesError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, Ok(line))) if line.starts_with('#') => continue,
            Some((_, Ok(line))) => break line,
            Some((_, Err(source))) => return Err(SeriesError::Io { path: path_str, source }),
            None => return Err(SeriesError::BadHeader { found: String::new() }),
        }
    };
    if header.trim_end() != CSV_HEADER {
        return Err(SeriesError::BadHeader {
            found: header.trim_end().to_string(),
        });
    }

    let mut rows: Vec<(i64, f64)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, counting the header as line 1
        let line = line.map_err(|source| SeriesError::Io {
            path: path_str.clone(),
            source,
        })?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let (ts_raw, value_raw) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(SeriesError::MalformedRow {
                    line: line_no,
                    reason: "expected exactly 2 comma-separated fields".into(),
                })
            }
        };
        let ts = NaiveDateTime::parse_from_str(ts_raw.trim(), TIMESTAMP_FORMAT)
            .map_err(|e| SeriesError::MalformedRow {
                line: line_no,
                reason: format!("bad timestamp `{ts_raw}`: {e}"),
            })?
            .and_utc()
            .timestamp();
        let value: f64 = value_raw
            .trim()
            .parse()
            .map_err(|e| SeriesError::MalformedRow {
                line: line_no,
                reason: format!("bad value `{value_raw}`: {e}"),
            })?;
        if !value.is_finite() {
            return Err(SeriesError::NonFiniteValue { at: line_no });
        }
        rows.push((ts, value));
    }

    rows.sort_by_key(|&(ts, _)| ts);
    let (timestamps, values) = rows.into_iter().unzip();
    TimeSeries::new(timestamps, values)
}

/// Min-max scaling parameters, kept for inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: f64,
    pub max: f64,
}

impl NormalizationParams {
    /// Fits min/max over `values`; rejects constant input.
    pub fn fit(values: &[f64]) -> Result<Self, SeriesError> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(SeriesError::ConstantSeries { value: min });
        }
        Ok(Self { min, max })
    }

    /// Maps values through `(x - min) / (max - min)`.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let span = self.max - self.min;
        values.iter().map(|&x| (x - self.min) / span).collect()
    }

    /// Inverse of [`NormalizationParams::apply`].
    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        let span = self.max - self.min;
        values.iter().map(|&x| x * span + self.min).collect()
    }
}

/// Scales a series to `[0, 1]`, returning the parameters for inversion.
pub fn minmax_normalize(s: &TimeSeries) -> Result<(TimeSeries, NormalizationParams), SeriesError> {
    let params = NormalizationParams::fit(s.values())?;
    let scaled = params.apply(s.values());
    let out = TimeSeries::new(s.timestamps().to_vec(), scaled)?;
    Ok((out, params))
}

/// Maps normalized values back to the original scale.
pub fn denormalize(values: &[f64], params: &NormalizationParams) -> Vec<f64> {
    params.invert(values)
}

/// Stride-1 sliding-window samples over a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub input_len: usize,
    pub output_len: usize,
}

impl WindowedDataset {
    pub fn num_samples(&self) -> usize {
        self.inputs.len()
    }
}

/// Builds all `len - m - n + 1` windows: sample `i` has input `s[i..i+m]`
/// and target `s[i+m..i+m+n]`.
pub fn sliding_window(
    s: &[f64],
    input_len: usize,
    output_len: usize,
) -> Result<WindowedDataset, SeriesError> {
    let needed = input_len + output_len;
    if s.len() < needed {
        return Err(SeriesError::SeriesTooShort {
            len: s.len(),
            min: needed,
        });
    }
    let num = s.len() - needed + 1;
    let mut inputs = Vec::with_capacity(num);
    let mut targets = Vec::with_capacity(num);
    for i in 0..num {
        inputs.push(s[i..i + input_len].to_vec());
        targets.push(s[i + input_len..i + needed].to_vec());
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        input_len,
        output_len,
    })
}

/// Chronological train/validation/test split. Sizes are floor-rounded;
/// the remainder goes to the test partition.
pub fn split_train_val_test(
    d: &WindowedDataset,
    fractions: (f64, f64, f64),
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset), SeriesError> {
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(SeriesError::InvalidFractions { sum });
    }
    let len = d.num_samples();
    let n_train = (ft * len as f64).floor() as usize;
    let n_val = (fv * len as f64).floor() as usize;
    let n_test = len - n_train - n_val;
    for (count, which) in [(n_train, "train"), (n_val, "validation"), (n_test, "test")] {
        if count == 0 {
            return Err(SeriesError::EmptySplit { which, len });
        }
    }
    let take = |lo: usize, hi: usize| WindowedDataset {
        inputs: d.inputs[lo..hi].to_vec(),
        targets: d.targets[lo..hi].to_vec(),
        input_len: d.input_len,
        output_len: d.output_len,
    };
    Ok((
        take(0, n_train),
        take(n_train, n_train + n_val),
        take(n_train + n_val, len),
    ))
}

/// Month-to-season assignment covering all twelve months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonMap {
    /// Season label per month, index 0 = January.
    labels: Vec<String>,
}

impl SeasonMap {
    /// Builds a map from `(season, months)` pairs; every month 1-12 must be
    /// assigned.
    pub fn from_pairs(pairs: &[(&str, &[u32])]) -> Result<Self, SeriesError> {
        let mut labels: Vec<Option<String>> = vec![None; 12];
        for (season, months) in pairs {
            for &m in *months {
                if !(1..=12).contains(&m) {
                    return Err(SeriesError::IncompleteSeasonMap { month: m });
                }
                labels[(m - 1) as usize] = Some((*season).to_string());
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or(SeriesError::IncompleteSeasonMap { month: i as u32 + 1 }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { labels })
    }

    pub fn label_for_month(&self, month: u32) -> &str {
        &self.labels[(month - 1) as usize]
    }

    pub fn label_for_timestamp(&self, epoch_secs: i64) -> &str {
        let month = DateTime::from_timestamp(epoch_secs, 0)
            .expect("valid epoch timestamp")
            .month();
        self.label_for_month(month)
    }

    /// Distinct season labels, in deterministic (sorted) order.
    pub fn seasons(&self) -> Vec<String> {
        let mut s: Vec<String> = self.labels.clone();
        s.sort();
        s.dedup();
        s
    }
}

impl Default for SeasonMap {
    /// Indian meteorological convention: winter {11,12,1,2},
    /// summer {3,4,5,6}, rainy {7,8,9,10}.
    fn default() -> Self {
        Self::from_pairs(&[
            ("winter", &[11, 12, 1, 2]),
            ("summer", &[3, 4, 5, 6]),
            ("rainy", &[7, 8, 9, 10]),
        ])
        .expect("default map covers all months")
    }
}

/// Samples of one season; timestamps are generally non-uniform because
/// season membership skips months.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeasonBucket {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

/// Partitions samples by the season of their calendar month. Every season
/// in the map gets a bucket, possibly empty.
pub fn season_split(s: &TimeSeries, map: &SeasonMap) -> BTreeMap<String, SeasonBucket> {
    let mut out: BTreeMap<String, SeasonBucket> = map
        .seasons()
        .into_iter()
        .map(|season| (season, SeasonBucket::default()))
        .collect();
    for (&ts, &v) in s.timestamps().iter().zip(s.values()) {
        let bucket = out
            .get_mut(map.label_for_timestamp(ts))
            .expect("map covers all months");
        bucket.timestamps.push(ts);
        bucket.values.push(v);
    }
    out
}

/// Generator parameters for a desk-scale synthetic wind-speed series:
/// AR(2) noise + a diurnal sinusoid (period 24 samples) + a slow trend
/// sinusoid (period [`TREND_PERIOD_STEPS`] samples), shifted by `offset`
/// and clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub length: usize,
    pub ar_coeffs: [f64; 2],
    pub noise_std: f64,
    pub diurnal_amplitude: f64,
    pub offset: f64,
    /// Amplitude of the slow-trend sinusoid; 0 disables the trend.
    #[serde(default)]
    pub trend_amplitude: f64,
}

/// Period of the slow-trend component: 73 days of hourly samples.
pub const TREND_PERIOD_STEPS: f64 = 1752.0;

const DIURNAL_PERIOD_STEPS: f64 = 24.0;
const AR_BURN_IN: usize = 256;
const SYNTH_START_EPOCH: i64 = 1_420_070_400; // 2015-01-01T00:00:00Z

/// Deterministic synthetic series for the given spec. Requires
/// `length >= 48` (two diurnal cycles).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<TimeSeries, SeriesError> {
    if spec.length < 48 {
        return Err(SeriesError::SeriesTooShort {
            len: spec.length,
            min: 48,
        });
    }
    let mut rng = rng_for(spec.seed, Domain::Synthetic, 0);
    let [a1, a2] = spec.ar_coeffs;

    let mut ar_prev = 0.0f64;
    let mut ar_prev2 = 0.0f64;
    let mut step = |rng: &mut rand_chacha::ChaCha8Rng| {
        let eps = if spec.noise_std > 0.0 {
            Normal::new(0.0, spec.noise_std)
                .expect("positive std")
                .sample(rng)
        } else {
            // keep the RNG stream position independent of noise_std
            let _: f64 = rng.gen();
            0.0
        };
        let ar = a1 * ar_prev + a2 * ar_prev2 + eps;
        ar_prev2 = ar_prev;
        ar_prev = ar;
        ar
    };
    for _ in 0..AR_BURN_IN {
        step(&mut rng);
    }

    let tau = std::f64::consts::TAU;
    let values: Vec<f64> = (0..spec.length)
        .map(|t| {
            let ar = step(&mut rng);
            let diurnal = spec.diurnal_amplitude * (tau * t as f64 / DIURNAL_PERIOD_STEPS).sin();
            let trend = spec.trend_amplitude * (tau * t as f64 / TREND_PERIOD_STEPS).sin();
            (spec.offset + diurnal + trend + ar).max(0.0)
        })
        .collect();

    TimeSeries::from_values(values, SYNTH_START_EPOCH, DEFAULT_STRIDE_SECS)
}
