//! End-to-end orchestration: decompose, reduce, classify, select models,
//! train per component, and forecast by rolling re-decomposition.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emd::{eemd, EemdConfig, EmdError, ImfSet};
use crate::nets::{
    build_features, latest_features, persistence, train, FeatureTensor, LstmNetwork, NetError,
    NetKind, NetworkSpec, TrainReport,
};
use crate::seeding::{rng_for, Domain};
use crate::series::{NormalizationParams, SeriesError, TimeSeries};
use crate::stats::{classify, group_by_lag, optimal_lag, Complexity, ImfProfile, StatsError};

/// Artifact format version; loading rejects anything else.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StageSource {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage `{stage}`{}: {source}", group.map(|g| format!(", group {g}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        group: Option<usize>,
        source: StageSource,
    },
    #[error("invalid pipeline config: {reason}")]
    InvalidConfig { reason: String },
    #[error("history too short: {len} samples, need at least {min}")]
    HistoryTooShort { len: usize, min: usize },
    #[error("requested horizon {requested} exceeds the model horizon {max}")]
    HorizonTooLong { requested: usize, max: usize },
    #[error("unsupported model artifact version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model artifact: {0}")]
    Serde(#[from] serde_json::Error),
}

fn stage<T, E: Into<StageSource>>(
    name: &'static str,
    group: Option<usize>,
    result: Result<T, E>,
) -> Result<T, PipelineError> {
    result.map_err(|e| PipelineError::Stage {
        stage: name,
        group,
        source: e.into(),
    })
}

/// Input window length: taken from each group's PACF lag or pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLenChoice {
    Auto,
    Fixed(usize),
}

impl Serialize for InputLenChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InputLenChoice::Auto => s.serialize_str("auto"),
            InputLenChoice::Fixed(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for InputLenChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v >= 1 => Ok(InputLenChoice::Fixed(v as usize)),
            Raw::Num(v) => Err(D::Error::custom(format!("input length must be >= 1, got {v}"))),
            Raw::Text(s) if s == "auto" => Ok(InputLenChoice::Auto),
            Raw::Text(s) => Err(D::Error::custom(format!(
                "expected \"auto\" or an integer, got \"{s}\""
            ))),
        }
    }
}

/// Trainable hyper-parameters of one network family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSettings {
    pub layers: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub stateful: bool,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self::standard()
    }
}

impl NetworkSettings {
    pub fn standard() -> Self {
        let spec = NetworkSpec::standard(1, 1, 0);
        Self {
            layers: spec.layers,
            dropout: spec.dropout,
            learning_rate: spec.learning_rate,
            batch_size: spec.batch_size,
            epochs: spec.epochs,
            stateful: spec.stateful,
        }
    }

    pub fn bifeature() -> Self {
        let spec = NetworkSpec::bifeature(1, 1, 0);
        Self {
            layers: spec.layers,
            dropout: spec.dropout,
            learning_rate: spec.learning_rate,
            batch_size: spec.batch_size,
            epochs: spec.epochs,
            stateful: spec.stateful,
        }
    }

    fn to_spec(&self, kind: NetKind, m: usize, n: usize, seed: u64) -> NetworkSpec {
        let mut spec = match kind {
            NetKind::Standard => NetworkSpec::standard(m, n, seed),
            NetKind::BiFeature => NetworkSpec::bifeature(m, n, seed),
        };
        spec.layers = self.layers.clone();
        spec.dropout = self.dropout;
        spec.learning_rate = self.learning_rate;
        spec.batch_size = self.batch_size;
        spec.epochs = self.epochs;
        spec.stateful = self.stateful;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworksConfig {
    pub standard: NetworkSettings,
    pub bifeature: NetworkSettings,
}

impl Default for NetworksConfig {
    fn default() -> Self {
        Self {
            standard: NetworkSettings::standard(),
            bifeature: NetworkSettings::bifeature(),
        }
    }
}

/// Full pipeline configuration. Every field has a default, so `{}` is a
/// valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub eemd: EemdConfig,
    pub sampen: crate::stats::SampEnConfig,
    /// Complexity threshold separating simple from complex components.
    pub threshold: f64,
    pub m: InputLenChoice,
    /// Forecast horizon.
    pub n: usize,
    pub max_lag: usize,
    /// PACF significance multiplier (band = significance / sqrt(N)).
    pub significance: f64,
    /// Previous-day offset in samples.
    pub day_stride: usize,
    pub split: (f64, f64, f64),
    /// Cap on the rolling re-decomposition window; `None` uses the full
    /// history.
    pub rolling_window: Option<usize>,
    /// Merge components sharing a lag before modelling. Disabling trains
    /// one network per raw component.
    pub group_by_lag: bool,
    /// Floor for automatically chosen input windows.
    pub min_auto_input_len: usize,
    pub networks: NetworksConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            eemd: EemdConfig::default(),
            sampen: crate::stats::SampEnConfig::default(),
            threshold: 0.1,
            m: InputLenChoice::Auto,
            n: 4,
            max_lag: 24,
            significance: crate::stats::DEFAULT_SIGNIFICANCE,
            day_stride: 24,
            split: (0.7, 0.1, 0.2),
            rolling_window: None,
            group_by_lag: true,
            min_auto_input_len: 4,
            networks: NetworksConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |reason: String| Err(PipelineError::InvalidConfig { reason });
        if self.n == 0 {
            return invalid("horizon n must be >= 1".into());
        }
        if self.n >= self.day_stride {
            return invalid(format!(
                "horizon n ({}) must be smaller than day_stride ({})",
                self.n, self.day_stride
            ));
        }
        if self.max_lag == 0 {
            return invalid("max_lag must be >= 1".into());
        }
        let (a, b, c) = self.split;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return invalid(format!("split fractions must be positive and sum to 1, got {:?}", self.split));
        }
        if !self.threshold.is_finite() && self.threshold < f64::INFINITY {
            return invalid("threshold must be finite or +inf".into());
        }
        if self.min_auto_input_len == 0 {
            return invalid("min_auto_input_len must be >= 1".into());
        }
        // Reuse the network validators on representative specs.
        let std_spec = self.networks.standard.to_spec(NetKind::Standard, 1, self.n, 0);
        let bif_spec = self.networks.bifeature.to_spec(NetKind::BiFeature, 1, self.n, 0);
        stage("config", None, std_spec.validate())?;
        stage("config", None, bif_spec.validate())?;
        Ok(())
    }
}

/// Fitted pipeline: decomposition settings, per-group profiles and
/// forecasters, and the split geometry needed for honest evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub version: u32,
    pub config: PipelineConfig,
    pub profiles: Vec<ImfProfile>,
    pub models: Vec<LstmNetwork>,
    pub norm_params: Vec<NormalizationParams>,
    /// Raw IMF count (before lag grouping), kept for reduction reports.
    pub raw_imf_count: usize,
    /// First feasible target index (`day_stride + max group m`).
    pub first_target_index: usize,
    /// First target index of the held-out test span.
    pub test_start_index: usize,
    /// Sampling stride of the fitted series, seconds.
    pub stride_secs: i64,
}

impl PipelineModel {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn num_groups(&self) -> usize {
        self.models.len()
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != MODEL_VERSION {
            return Err(PipelineError::VersionMismatch {
                found: probe.version,
                expected: MODEL_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    /// Minimum history length needed to build features for every group.
    pub fn min_history(&self) -> usize {
        self.first_target_index.max(crate::emd::MIN_EEMD_LEN)
    }
}

/// Training byproducts that are not part of the model artifact.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: PipelineModel,
    /// Per-group loss curves, in group order.
    pub loss_curves: Vec<TrainReport>,
}

fn component_lags(set: &ImfSet, config: &PipelineConfig) -> Result<Vec<usize>, PipelineError> {
    set.components()
        .enumerate()
        .map(|(idx, comp)| {
            match optimal_lag(comp, config.max_lag, config.significance) {
                Ok(lag) => Ok(lag),
                // A flat component has no autocorrelation structure; treat
                // it as lag 1 rather than failing the whole fit.
                Err(StatsError::ConstantSeries) => Ok(1),
                Err(e) => stage("optimal_lag", Some(idx), Err::<usize, _>(e)),
            }
        })
        .collect()
}

struct GroupPlan {
    signal: Vec<f64>,
    lag: usize,
    input_len: usize,
}

fn plan_groups(
    set: &ImfSet,
    lags: &[usize],
    config: &PipelineConfig,
) -> Vec<GroupPlan> {
    let input_len = |lag: usize| match config.m {
        InputLenChoice::Auto => lag.max(config.min_auto_input_len),
        InputLenChoice::Fixed(m) => m,
    };
    if config.group_by_lag {
        group_by_lag(set, lags)
            .into_iter()
            .map(|g| GroupPlan {
                input_len: input_len(g.lag),
                signal: g.signal,
                lag: g.lag,
            })
            .collect()
    } else {
        set.components()
            .zip(lags)
            .map(|(comp, &lag)| GroupPlan {
                signal: comp.to_vec(),
                lag,
                input_len: input_len(lag),
            })
            .collect()
    }
}

/// Fits the full adaptive pipeline on a series.
///
/// Stages: ensemble decomposition, per-component optimal lag, lag
/// grouping, complexity classification, then one forecaster per group
/// (standard for simple groups, bidirectional-feature for complex ones)
/// trained on the chronologically first split of the windowed samples.
/// Normalization parameters come from the training span only.
pub fn fit(series: &TimeSeries, config: &PipelineConfig) -> Result<FitOutcome, PipelineError> {
    config.validate()?;
    let values = series.values();
    let n = config.n;

    let set = stage("eemd", None, eemd(values, &config.eemd))?;
    let raw_imf_count = set.num_imfs();
    let lags = component_lags(&set, config)?;
    let groups = plan_groups(&set, &lags, config);

    let signals: Vec<Vec<f64>> = groups.iter().map(|g| g.signal.clone()).collect();
    let group_lags: Vec<usize> = groups.iter().map(|g| g.lag).collect();
    let profiles = stage(
        "classify",
        None,
        classify(&signals, &group_lags, config.threshold, &config.sampen),
    )?;

    // Shared row geometry: every group uses the same target range so the
    // chronological split boundaries match across groups.
    let m_max = groups.iter().map(|g| g.input_len).max().expect("non-empty");
    let first_target = config.day_stride + m_max;
    if values.len() < first_target + n + 1 {
        return Err(PipelineError::HistoryTooShort {
            len: values.len(),
            min: first_target + n + 1,
        });
    }
    let rows = values.len() - n - first_target + 1;
    let n_train = (config.split.0 * rows as f64).floor() as usize;
    let n_val = (config.split.1 * rows as f64).floor() as usize;
    let n_test = rows - n_train - n_val;
    for (count, which) in [(n_train, "train"), (n_val, "validation"), (n_test, "test")] {
        if count == 0 {
            return stage(
                "split",
                None,
                Err(SeriesError::EmptySplit { which, len: rows }),
            );
        }
    }
    let test_start = first_target + n_train + n_val;
    // Normalization sees nothing past the last training target.
    let norm_span_end = first_target + n_train - 1 + n; // exclusive

    if let Some(window) = config.rolling_window {
        let needed = first_target + n + 1;
        if window < needed {
            return Err(PipelineError::InvalidConfig {
                reason: format!(
                    "rolling_window {window} is smaller than the minimum usable history {needed}"
                ),
            });
        }
    }

    // Per-group seeds derived from the master seed in group order.
    let mut seed_rng = rng_for(config.seed, Domain::GroupSeed, 0);
    let group_seeds: Vec<u64> = groups.iter().map(|_| seed_rng.next_u64()).collect();

    let trained: Vec<(LstmNetwork, NormalizationParams, TrainReport)> = groups
        .par_iter()
        .zip(&profiles)
        .zip(&group_seeds)
        .enumerate()
        .map(|(g, ((plan, profile), &seed))| {
            let kind = match profile.class {
                Complexity::Simple => NetKind::Standard,
                Complexity::Complex => NetKind::BiFeature,
            };
            let norm = stage(
                "normalize",
                Some(g),
                NormalizationParams::fit(&plan.signal[..norm_span_end]),
            )?;
            let scaled = norm.apply(&plan.signal);
            let rows = stage(
                "features",
                Some(g),
                build_features(&scaled, kind, plan.input_len, n, config.day_stride),
            )?;
            let tensors: Vec<FeatureTensor> = rows
                .into_iter()
                .filter(|(t, _)| *t >= first_target)
                .map(|(_, f)| f)
                .collect();
            let train_rows = &tensors[..n_train];
            let val_rows = &tensors[n_train..n_train + n_val];

            let settings = match kind {
                NetKind::Standard => &config.networks.standard,
                NetKind::BiFeature => &config.networks.bifeature,
            };
            let spec = settings.to_spec(kind, plan.input_len, n, seed);
            let mut net = stage("init", Some(g), LstmNetwork::new(spec))?;
            let report = stage("train", Some(g), train(&mut net, train_rows, val_rows))?;
            Ok((net, norm, report))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut models = Vec::with_capacity(trained.len());
    let mut norm_params = Vec::with_capacity(trained.len());
    let mut loss_curves = Vec::with_capacity(trained.len());
    for (net, norm, report) in trained {
        models.push(net);
        norm_params.push(norm);
        loss_curves.push(report);
    }

    Ok(FitOutcome {
        model: PipelineModel {
            version: MODEL_VERSION,
            config: config.clone(),
            profiles,
            models,
            norm_params,
            raw_imf_count,
            first_target_index: first_target,
            test_start_index: test_start,
            stride_secs: series.stride(),
        },
        loss_curves,
    })
}

/// Point forecasts plus the per-group contributions that sum to them.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Ensemble forecast per horizon step, m/s.
    pub point: Vec<f64>,
    /// `contributions[group][step]`; columns sum exactly to `point`.
    pub contributions: Vec<Vec<f64>>,
    /// Timestamps of the forecast steps.
    pub timestamps: Vec<i64>,
}

/// Assigns each fresh component to the fitted group with the nearest lag
/// (ties go to the smaller lag) and sums per group, so no component mass
/// is dropped even when the fresh decomposition has a different depth.
fn regroup_components(
    set: &ImfSet,
    fresh_lags: &[usize],
    group_lags: &[usize],
) -> Vec<Vec<f64>> {
    let len = set.source_len();
    let mut grouped = vec![vec![0.0; len]; group_lags.len()];
    for (comp, &lag) in set.components().zip(fresh_lags) {
        let target = group_lags
            .iter()
            .enumerate()
            .min_by_key(|(_, &gl)| (gl.abs_diff(lag), gl))
            .map(|(i, _)| i)
            .expect("at least one group");
        for (acc, v) in grouped[target].iter_mut().zip(comp) {
            *acc += v;
        }
    }
    grouped
}

fn forecast_from_values(
    model: &PipelineModel,
    values: &[f64],
    horizon: usize,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    if horizon == 0 || horizon > model.n() {
        return Err(PipelineError::HorizonTooLong {
            requested: horizon,
            max: model.n(),
        });
    }
    let min = model.min_history();
    if values.len() < min {
        return Err(PipelineError::HistoryTooShort {
            len: values.len(),
            min,
        });
    }
    let start = model
        .config
        .rolling_window
        .map(|cap| values.len().saturating_sub(cap))
        .unwrap_or(0);
    let window = &values[start..];

    let set = stage("eemd", None, eemd(window, &model.config.eemd))?;
    let fresh_lags = component_lags(&set, &model.config)?;
    let group_lags: Vec<usize> = model.profiles.iter().map(|p| p.lag).collect();
    let grouped = regroup_components(&set, &fresh_lags, &group_lags);

    let n = model.n();
    let mut contributions = Vec::with_capacity(grouped.len());
    for (g, signal) in grouped.iter().enumerate() {
        let net = &model.models[g];
        let norm = &model.norm_params[g];
        let scaled = norm.apply(signal);
        let feats = stage(
            "features",
            Some(g),
            latest_features(
                &scaled,
                net.spec.kind,
                net.spec.input_len,
                n,
                model.config.day_stride,
            ),
        )?;
        let scaled_pred = stage("predict", Some(g), net.predict(&feats))?;
        let pred = norm.invert(&scaled_pred);
        contributions.push(pred[..horizon].to_vec());
    }
    Ok(contributions)
}

/// Forecasts the next `horizon` values after the end of `history` by
/// re-decomposing the (optionally capped) history and summing the
/// per-group model predictions.
pub fn forecast(
    model: &PipelineModel,
    history: &TimeSeries,
    horizon: usize,
) -> Result<ForecastResult, PipelineError> {
    let contributions = forecast_from_values(model, history.values(), horizon)?;
    let mut point = vec![0.0; horizon];
    for group in &contributions {
        for (p, v) in point.iter_mut().zip(group) {
            *p += v;
        }
    }
    let last = *history.timestamps().last().expect("non-empty series");
    let stride = history.stride();
    let timestamps = (1..=horizon as i64).map(|k| last + k * stride).collect();
    Ok(ForecastResult {
        point,
        contributions,
        timestamps,
    })
}

/// Anything that can forecast the next values from a value history.
pub trait Forecaster: Sync {
    fn horizon(&self) -> usize;
    fn forecast_values(&self, history: &[f64]) -> Result<Vec<f64>, PipelineError>;
}

impl Forecaster for PipelineModel {
    fn horizon(&self) -> usize {
        self.n()
    }

    fn forecast_values(&self, history: &[f64]) -> Result<Vec<f64>, PipelineError> {
        let contributions = forecast_from_values(self, history, self.n())?;
        let mut point = vec![0.0; self.n()];
        for group in &contributions {
            for (p, v) in point.iter_mut().zip(group) {
                *p += v;
            }
        }
        Ok(point)
    }
}

/// Persistence baseline behind the same interface.
pub struct PersistenceForecaster {
    pub horizon: usize,
}

impl Forecaster for PersistenceForecaster {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast_values(&self, history: &[f64]) -> Result<Vec<f64>, PipelineError> {
        if history.is_empty() {
            return Err(PipelineError::HistoryTooShort { len: 0, min: 1 });
        }
        Ok(persistence(history, self.horizon))
    }
}

/// Walk-forward forecasts over `series` starting at target index
/// `test_start`: the forecast for origin `t` sees exactly the first `t`
/// values.
#[derive(Debug, Clone)]
pub struct WalkForecasts {
    /// Target index of each forecast's first step.
    pub origins: Vec<usize>,
    /// Timestamp of the last observed sample per forecast.
    pub origin_timestamps: Vec<i64>,
    /// `predictions[i][k]` forecasts `series[origins[i] + k]`.
    pub predictions: Vec<Vec<f64>>,
}

pub fn walk_forward(
    forecaster: &dyn Forecaster,
    series: &TimeSeries,
    test_start: usize,
) -> Result<WalkForecasts, PipelineError> {
    let n = forecaster.horizon();
    let len = series.len();
    if test_start + n > len {
        return Err(PipelineError::HistoryTooShort {
            len,
            min: test_start + n,
        });
    }
    let mut origins = Vec::new();
    let mut origin_timestamps = Vec::new();
    let mut predictions = Vec::new();
    for t in test_start..=len - n {
        let pred = forecaster.forecast_values(&series.values()[..t])?;
        origins.push(t);
        origin_timestamps.push(series.timestamps()[t - 1]);
        predictions.push(pred);
    }
    Ok(WalkForecasts {
        origins,
        origin_timestamps,
        predictions,
    })
}

/// Per-horizon aggregate errors of a walk-forward run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub count: usize,
}

pub fn horizon_errors(
    walk: &WalkForecasts,
    series: &TimeSeries,
    horizons: &[usize],
) -> Result<Vec<HorizonRecord>, PipelineError> {
    let values = series.values();
    horizons
        .iter()
        .map(|&h| {
            let mut pred = Vec::new();
            let mut actual = Vec::new();
            for (i, &t) in walk.origins.iter().enumerate() {
                let target = t + h - 1;
                if target < values.len() && h <= walk.predictions[i].len() {
                    pred.push(walk.predictions[i][h - 1]);
                    actual.push(values[target]);
                }
            }
            let mae = crate::metrics::mae(&pred, &actual);
            let rmse = crate::metrics::rmse(&pred, &actual);
            let nrmse = crate::metrics::nrmse(&pred, &actual);
            match (mae, rmse, nrmse) {
                (Ok(mae), Ok(rmse), Ok(nrmse)) => Ok(HorizonRecord {
                    horizon: h,
                    mae,
                    rmse,
                    nrmse,
                    count: pred.len(),
                }),
                _ => Err(PipelineError::InvalidConfig {
                    reason: format!("horizon {h} has no evaluable forecasts"),
                }),
            }
        })
        .collect()
}

/// Walk-forward evaluation at each requested horizon; forecasts at time
/// `t` consume only data before `t`.
pub fn multi_step_eval(
    forecaster: &dyn Forecaster,
    series: &TimeSeries,
    test_start: usize,
    horizons: &[usize],
) -> Result<Vec<HorizonRecord>, PipelineError> {
    for &h in horizons {
        if h == 0 || h > forecaster.horizon() {
            return Err(PipelineError::HorizonTooLong {
                requested: h,
                max: forecaster.horizon(),
            });
        }
    }
    let walk = walk_forward(forecaster, series, test_start)?;
    horizon_errors(&walk, series, horizons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{generate_synthetic, SynthSpec};
    use crate::stats::SampEnConfig;

    fn tiny_config(seed: u64) -> PipelineConfig {
        PipelineConfig {
            eemd: EemdConfig {
                ensemble_size: 8,
                master_seed: seed,
                ..Default::default()
            },
            sampen: SampEnConfig::default(),
            n: 2,
            max_lag: 8,
            networks: NetworksConfig {
                standard: NetworkSettings {
                    layers: vec![6, 5],
                    dropout: 0.1,
                    learning_rate: 0.005,
                    batch_size: 32,
                    epochs: 2,
                    stateful: true,
                },
                bifeature: NetworkSettings {
                    layers: vec![5, 4],
                    dropout: 0.02,
                    learning_rate: 0.005,
                    batch_size: 32,
                    epochs: 2,
                    stateful: true,
                },
            },
            seed,
            ..Default::default()
        }
    }

    fn bench_series(seed: u64, n: usize) -> TimeSeries {
        generate_synthetic(&SynthSpec {
            seed,
            length: n,
            ar_coeffs: [0.7, -0.1],
            noise_std: 0.35,
            diurnal_amplitude: 2.5,
            offset: 7.0,
            trend_amplitude: 0.8,
        })
        .unwrap()
    }

    #[test]
    fn fit_reduces_group_count_and_obeys_kind_law() {
        let series = bench_series(7, 700);
        let cfg = tiny_config(7);
        let outcome = fit(&series, &cfg).unwrap();
        let model = &outcome.model;
        // +1 for the residual component
        assert!(
            model.num_groups() <= model.raw_imf_count + 1,
            "groups {} vs raw components {}",
            model.num_groups(),
            model.raw_imf_count + 1
        );
        for (profile, net) in model.profiles.iter().zip(&model.models) {
            let expected = if profile.sampen > cfg.threshold {
                NetKind::BiFeature
            } else {
                NetKind::Standard
            };
            assert_eq!(net.spec.kind, expected);
        }
        assert_eq!(outcome.loss_curves.len(), model.num_groups());
    }

    #[test]
    fn slow_sinusoid_yields_simple_groups() {
        let n = 900;
        let values: Vec<f64> = (0..n)
            .map(|i| 5.0 + (std::f64::consts::TAU * i as f64 / 192.0).sin())
            .collect();
        let series = TimeSeries::from_values(values, 0, 3600).unwrap();
        let mut cfg = tiny_config(3);
        // degenerate ensemble keeps the clean signal clean: no noise modes
        cfg.eemd.ensemble_size = 1;
        cfg.eemd.noise_amplitude = 1e-9;
        let outcome = fit(&series, &cfg).unwrap();
        for (g, profile) in outcome.model.profiles.iter().enumerate() {
            assert_eq!(
                profile.class,
                Complexity::Simple,
                "group {g} sampen {}",
                profile.sampen
            );
        }
    }

    #[test]
    fn noise_dominated_series_uses_bifeature() {
        let series = generate_synthetic(&SynthSpec {
            seed: 9,
            length: 700,
            ar_coeffs: [0.2, 0.0],
            noise_std: 1.0,
            diurnal_amplitude: 0.3,
            offset: 6.0,
            trend_amplitude: 0.0,
        })
        .unwrap();
        let outcome = fit(&series, &tiny_config(9)).unwrap();
        assert!(
            outcome
                .model
                .models
                .iter()
                .any(|m| m.spec.kind == NetKind::BiFeature),
            "expected at least one complex group"
        );
    }

    #[test]
    fn forecast_point_is_sum_of_contributions() {
        let series = bench_series(11, 700);
        let outcome = fit(&series, &tiny_config(11)).unwrap();
        let result = forecast(&outcome.model, &series, 2).unwrap();
        for k in 0..result.point.len() {
            let col: f64 = result.contributions.iter().map(|g| g[k]).sum();
            assert_eq!(col, result.point[k], "column {k} must sum exactly");
        }
        assert_eq!(result.timestamps.len(), 2);
        assert_eq!(
            result.timestamps[0],
            series.timestamps().last().unwrap() + series.stride()
        );
    }

    #[test]
    fn fit_and_forecast_are_deterministic() {
        let series = bench_series(13, 650);
        let cfg = tiny_config(13);
        let a = fit(&series, &cfg).unwrap();
        let b = fit(&series, &cfg).unwrap();
        assert_eq!(
            a.model.to_json().unwrap(),
            b.model.to_json().unwrap(),
            "fit must be bit-reproducible"
        );
        let fa = forecast(&a.model, &series, 2).unwrap();
        let fb = forecast(&b.model, &series, 2).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn model_roundtrip_and_version_gate() {
        let series = bench_series(15, 650);
        let outcome = fit(&series, &tiny_config(15)).unwrap();
        let json = outcome.model.to_json().unwrap();
        let back = PipelineModel::from_json(&json).unwrap();
        assert_eq!(back, outcome.model);

        let tampered = json.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(
            PipelineModel::from_json(&tampered),
            Err(PipelineError::VersionMismatch { found: 9, .. })
        ));
    }

    struct OracleForecaster {
        values: Vec<f64>,
        horizon: usize,
    }

    impl Forecaster for OracleForecaster {
        fn horizon(&self) -> usize {
            self.horizon
        }

        fn forecast_values(&self, history: &[f64]) -> Result<Vec<f64>, PipelineError> {
            let t = history.len();
            // Sanity: the walk must hand over exactly the past.
            for (a, b) in history.iter().zip(&self.values[..t]) {
                assert_eq!(a, b, "history must be a prefix of the series");
            }
            Ok(self.values[t..t + self.horizon].to_vec())
        }
    }

    #[test]
    fn perfect_oracle_scores_zero() {
        let series = bench_series(17, 400);
        let oracle = OracleForecaster {
            values: series.values().to_vec(),
            horizon: 3,
        };
        let records = multi_step_eval(&oracle, &series, 350, &[1, 2, 3]).unwrap();
        for r in records {
            assert_eq!(r.mae, 0.0);
            assert_eq!(r.rmse, 0.0);
        }
    }

    #[test]
    fn persistence_error_grows_with_horizon() {
        let series = generate_synthetic(&SynthSpec {
            seed: 23,
            length: 2000,
            ar_coeffs: [0.8, 0.0],
            noise_std: 0.4,
            diurnal_amplitude: 0.0,
            offset: 7.0,
            trend_amplitude: 0.0,
        })
        .unwrap();
        let p = PersistenceForecaster { horizon: 4 };
        let records = multi_step_eval(&p, &series, 1500, &[1, 2, 3, 4]).unwrap();
        for pair in records.windows(2) {
            assert!(
                pair[1].rmse >= pair[0].rmse,
                "persistence must not improve with horizon: {pair:?}"
            );
        }
    }

    #[test]
    fn single_horizon_table() {
        let series = bench_series(25, 400);
        let p = PersistenceForecaster { horizon: 4 };
        let records = multi_step_eval(&p, &series, 380, &[1]).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].horizon, 1);
    }

    #[test]
    fn degenerate_single_group_model_forecasts_its_bias() {
        // One group, zero-weighted network: the prediction is the
        // denormalized head bias, and the ensemble sum equals it.
        let series = bench_series(27, 650);
        let mut cfg = tiny_config(27);
        cfg.eemd.ensemble_size = 4;
        let outcome = fit(&series, &cfg).unwrap();
        let mut model = outcome.model;
        model.profiles.truncate(1);
        model.models.truncate(1);
        model.norm_params.truncate(1);
        for t in model.models[0].tensors_mut() {
            t.fill(0.0);
        }
        model.models[0].head_bias = vec![0.5; model.n()];
        let norm = model.norm_params[0];
        let expected = norm.invert(&vec![0.5; model.n()]);
        let result = forecast(&model, &series, model.n()).unwrap();
        assert_eq!(result.point, expected);
    }

    #[test]
    fn threshold_extremes_flip_every_group() {
        let series = bench_series(29, 700);
        let mut all_bi = tiny_config(29);
        all_bi.threshold = 0.0;
        let outcome = fit(&series, &all_bi).unwrap();
        assert!(outcome
            .model
            .models
            .iter()
            .all(|m| m.spec.kind == NetKind::BiFeature));

        let mut all_std = tiny_config(29);
        all_std.threshold = f64::INFINITY;
        let outcome = fit(&series, &all_std).unwrap();
        assert!(outcome
            .model
            .models
            .iter()
            .all(|m| m.spec.kind == NetKind::Standard));
    }

    #[test]
    fn config_json_defaults_and_auto_m() {
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"m": "auto", "n": 3, "threshold": 0.1}"#).unwrap();
        assert_eq!(cfg.m, InputLenChoice::Auto);
        assert_eq!(cfg.n, 3);
        let cfg: PipelineConfig = serde_json::from_str(r#"{"m": 6}"#).unwrap();
        assert_eq!(cfg.m, InputLenChoice::Fixed(6));
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"m": "sometimes"}"#).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config(1);
        cfg.n = 0;
        assert!(matches!(
            cfg.validate(),
            Err(PipelineError::InvalidConfig { .. })
        ));
        let mut cfg = tiny_config(1);
        cfg.networks.standard.dropout = 1.0;
        assert!(matches!(
            cfg.validate(),
            Err(PipelineError::Stage { stage: "config", .. })
        ));
        let mut cfg = tiny_config(1);
        cfg.rolling_window = Some(10);
        let series = bench_series(1, 650);
        assert!(matches!(
            fit(&series, &cfg),
            Err(PipelineError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn history_too_short_is_reported() {
        let series = bench_series(31, 650);
        let outcome = fit(&series, &tiny_config(31)).unwrap();
        let short = series.prefix(20).unwrap();
        assert!(matches!(
            forecast(&outcome.model, &short, 2),
            Err(PipelineError::HistoryTooShort { .. })
        ));
        assert!(matches!(
            forecast(&outcome.model, &series, 99),
            Err(PipelineError::HorizonTooLong { .. })
        ));
    }
}
