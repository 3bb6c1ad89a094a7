//! Per-component statistics: PACF-based optimal lags, lag grouping,
//! sample-entropy scoring, and simple/complex classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emd::ImfSet;
use crate::util::population_std;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("series too short: {len} samples, need more than {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("constant series has no autocorrelation structure")]
    ConstantSeries,
    #[error("sample entropy undefined: {a} extended matches, {b} template matches")]
    UndefinedEntropy { a: usize, b: usize },
}

/// Default significance multiplier for the PACF band (95% normal quantile).
pub const DEFAULT_SIGNIFICANCE: f64 = 1.96;

/// Partial autocorrelations at lags `1..=max_lag` via the Durbin-Levinson
/// recursion on biased sample autocovariances.
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>, StatsError> {
    let n = x.len();
    if n <= max_lag + 1 {
        return Err(StatsError::SeriesTooShort {
            len: n,
            min: max_lag + 1,
        });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut autocov = vec![0.0; max_lag + 1];
    for (k, cov) in autocov.iter_mut().enumerate() {
        *cov = (0..n - k)
            .map(|t| (x[t] - mean) * (x[t + k] - mean))
            .sum::<f64>()
            / n as f64;
    }
    if autocov[0] <= 0.0 {
        return Err(StatsError::ConstantSeries);
    }

    let mut pacf = Vec::with_capacity(max_lag);
    let mut phi_prev = vec![0.0; max_lag + 1]; // phi_prev[j] = phi_{k-1, j}
    let mut error_var = autocov[0];
    for k in 1..=max_lag {
        if error_var <= f64::EPSILON * autocov[0] {
            // Perfectly predictable beyond this order; remaining partials vanish.
            pacf.push(0.0);
            continue;
        }
        let mut num = autocov[k];
        for j in 1..k {
            num -= phi_prev[j] * autocov[k - j];
        }
        let phi_kk = num / error_var;
        let mut phi = phi_prev.clone();
        phi[k] = phi_kk;
        for j in 1..k {
            phi[j] = phi_prev[j] - phi_kk * phi_prev[k - j];
        }
        error_var *= 1.0 - phi_kk * phi_kk;
        phi_prev = phi;
        pacf.push(phi_kk);
    }
    Ok(pacf)
}

/// Largest lag whose partial autocorrelation exceeds the
/// `significance / sqrt(N)` band; falls back to 1 when nothing is
/// significant.
pub fn optimal_lag(x: &[f64], max_lag: usize, significance: f64) -> Result<usize, StatsError> {
    let values = pacf(x, max_lag)?;
    let band = significance / (x.len() as f64).sqrt();
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > band)
        .map(|(i, _)| i + 1)
        .next_back()
        .unwrap_or(1))
}

/// One merged component: IMFs (and possibly the residual) that share a lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LagGroup {
    pub signal: Vec<f64>,
    pub lag: usize,
    /// Indices into the original component list (residual = last index).
    pub members: Vec<usize>,
}

/// Sums components that share an identical lag. `lags` must hold one entry
/// per component, the residual included as the final component. Groups come
/// back ordered by ascending lag.
pub fn group_by_lag(set: &ImfSet, lags: &[usize]) -> Vec<LagGroup> {
    let components: Vec<&[f64]> = set.components().collect();
    assert_eq!(
        lags.len(),
        components.len(),
        "one lag per component (residual included)"
    );
    let mut distinct: Vec<usize> = lags.to_vec();
    distinct.sort_unstable();
    distinct.dedup();

    distinct
        .into_iter()
        .map(|lag| {
            let members: Vec<usize> = (0..lags.len()).filter(|&i| lags[i] == lag).collect();
            let mut signal = vec![0.0; set.source_len()];
            for &i in &members {
                for (acc, v) in signal.iter_mut().zip(components[i]) {
                    *acc += v;
                }
            }
            LagGroup { signal, lag, members }
        })
        .collect()
}

/// Sample-entropy parameters: template length `m` and tolerance `r` as a
/// fraction of the series std. The template stride is one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampEnConfig {
    pub template_len: usize,
    pub tolerance_frac: f64,
}

impl Default for SampEnConfig {
    fn default() -> Self {
        Self {
            template_len: 2,
            tolerance_frac: 0.2,
        }
    }
}

/// Raw template-match counts behind sample entropy.
///
/// Both template lengths range over the `N - m` start positions that admit
/// an extension to length `m + 1`, so the extended matches `A` can never
/// exceed the template matches `B`. Distance is Chebyshev, matching is
/// strict (`< r`) with `r = tolerance_frac * std(x)`.
pub fn sample_entropy_counts(
    x: &[f64],
    cfg: &SampEnConfig,
) -> Result<(usize, usize), StatsError> {
    let m = cfg.template_len;
    let n = x.len();
    if n <= m + 1 {
        return Err(StatsError::SeriesTooShort { len: n, min: m + 1 });
    }
    let std = population_std(x);
    if std == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    let r = cfg.tolerance_frac * std;

    let templates = n - m;
    let mut a = 0usize;
    let mut b = 0usize;
    for i in 0..templates {
        for j in i + 1..templates {
            let mut dist: f64 = 0.0;
            for k in 0..m {
                dist = dist.max((x[i + k] - x[j + k]).abs());
                if dist >= r {
                    break;
                }
            }
            if dist < r {
                b += 1;
                if dist.max((x[i + m] - x[j + m]).abs()) < r {
                    a += 1;
                }
            }
        }
    }
    Ok((a, b))
}

/// Sample entropy `-ln(A/B)`; errors out (rather than returning infinity)
/// when either pair count is zero.
pub fn sample_entropy(x: &[f64], cfg: &SampEnConfig) -> Result<f64, StatsError> {
    let (a, b) = sample_entropy_counts(x, cfg)?;
    if a == 0 || b == 0 {
        return Err(StatsError::UndefinedEntropy { a, b });
    }
    Ok(-((a as f64 / b as f64).ln()))
}

/// Complexity class of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Simple,
    Complex,
}

/// Strict threshold rule: complex only when the score exceeds the threshold.
pub fn classify_score(sampen: f64, threshold: f64) -> Complexity {
    if sampen > threshold {
        Complexity::Complex
    } else {
        Complexity::Simple
    }
}

/// Per-component metadata driving model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImfProfile {
    pub lag: usize,
    pub sampen: f64,
    pub class: Complexity,
}

/// Profiles each signal with its lag and sample entropy. A signal whose
/// entropy is undefined (no template matches) is treated as maximally
/// irregular and classified complex.
pub fn classify(
    signals: &[Vec<f64>],
    lags: &[usize],
    threshold: f64,
    cfg: &SampEnConfig,
) -> Result<Vec<ImfProfile>, StatsError> {
    assert_eq!(signals.len(), lags.len(), "one lag per signal");
    signals
        .iter()
        .zip(lags)
        .map(|(signal, &lag)| {
            let sampen = match sample_entropy(signal, cfg) {
                Ok(s) => s,
                Err(StatsError::UndefinedEntropy { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(ImfProfile {
                lag,
                sampen,
                class: classify_score(sampen, threshold),
            })
        })
        .collect()
}
