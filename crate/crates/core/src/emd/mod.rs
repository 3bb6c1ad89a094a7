//! Empirical mode decomposition by sifting, its noise-ensemble variant,
//! and rolling re-decomposition for real-time forecasting.

mod extrema;
mod spline;

pub use extrema::find_extrema;
pub use spline::envelope;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{rng_for, Domain};
use crate::util::population_std;

#[derive(Debug, Error)]
pub enum EmdError {
    #[error("series too short for decomposition: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("too few extrema to build an envelope: found {found}")]
    TooFewExtrema { found: usize },
    #[error("invalid ensemble config: {reason}")]
    InvalidConfig { reason: String },
}

/// Ordered intrinsic mode functions plus the final residual. All
/// components have the length of the decomposed signal; summing them
/// reconstructs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImfSet {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

impl ImfSet {
    pub fn source_len(&self) -> usize {
        self.residual.len()
    }

    pub fn num_imfs(&self) -> usize {
        self.imfs.len()
    }

    /// IMFs followed by the residual.
    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.imfs
            .iter()
            .map(|v| v.as_slice())
            .chain(std::iter::once(self.residual.as_slice()))
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

/// Ensemble decomposition parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EemdConfig {
    /// White-noise std as a fraction of the signal std.
    pub noise_amplitude: f64,
    pub ensemble_size: usize,
    pub max_siftings: usize,
    /// Cauchy criterion threshold on successive sifting iterates.
    pub sift_tolerance: f64,
    pub master_seed: u64,
}

impl Default for EemdConfig {
    fn default() -> Self {
        Self {
            noise_amplitude: 0.05,
            ensemble_size: 100,
            max_siftings: DEFAULT_MAX_SIFTINGS,
            sift_tolerance: DEFAULT_SIFT_TOLERANCE,
            master_seed: 0,
        }
    }
}

impl EemdConfig {
    fn validate(&self) -> Result<(), EmdError> {
        if !(self.noise_amplitude > 0.0) {
            return Err(EmdError::InvalidConfig {
                reason: format!("noise_amplitude must be > 0, got {}", self.noise_amplitude),
            });
        }
        if self.ensemble_size == 0 {
            return Err(EmdError::InvalidConfig {
                reason: "ensemble_size must be >= 1".into(),
            });
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_SIFTINGS: usize = 50;
pub const DEFAULT_SIFT_TOLERANCE: f64 = 0.2;

/// Shortest series the sifting loop accepts.
pub const MIN_EEMD_LEN: usize = 8;
const MIN_SERIES_LEN: usize = MIN_EEMD_LEN;
// Guard against pathological signals that keep producing modes.
const MAX_MODES: usize = 64;
// Stop extracting once the residual holds less than this fraction of the
// input energy; below it only float dust remains.
const RESIDUAL_ENERGY_FLOOR: f64 = 1e-12;

fn is_monotone(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] >= w[0]) || x.windows(2).all(|w| w[1] <= w[0])
}

fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Extrema/zero-crossing balance that defines a mode function.
fn is_mode_balanced(x: &[f64]) -> bool {
    let (maxima, minima) = find_extrema(x);
    let extrema = maxima.len() + minima.len();
    extrema.abs_diff(zero_crossings(x)) <= 1
}

/// One sifting pass: repeatedly subtracts the mean envelope until the
/// Cauchy criterion `sum((h_prev - h_cur)^2) / sum(h_prev^2)` drops below
/// `tolerance` for a candidate with balanced extrema and zero crossings,
/// or the iteration budget runs out.
fn sift(source: &[f64], max_siftings: usize, tolerance: f64) -> Vec<f64> {
    let n = source.len();
    let mut h = source.to_vec();
    for _ in 0..max_siftings {
        let (maxima, minima) = find_extrema(&h);
        if maxima.is_empty() || minima.is_empty() {
            break;
        }
        let upper = envelope(&h, &maxima).expect("maxima checked non-empty");
        let lower = envelope(&h, &minima).expect("minima checked non-empty");
        let mut diff_sq = 0.0;
        let mut prev_sq = 0.0;
        for i in 0..n {
            let mean = 0.5 * (upper[i] + lower[i]);
            diff_sq += mean * mean;
            prev_sq += h[i] * h[i];
            h[i] -= mean;
        }
        if prev_sq == 0.0 || (diff_sq / prev_sq < tolerance && is_mode_balanced(&h)) {
            break;
        }
    }
    h
}

/// Decomposes a signal into IMFs and a residual. Extraction stops once the
/// residual is monotone, has fewer than two extrema, or carries negligible
/// energy; the components sum back to the input to float round-off.
pub fn emd(x: &[f64], max_siftings: usize, sift_tolerance: f64) -> Result<ImfSet, EmdError> {
    if x.len() < MIN_SERIES_LEN {
        return Err(EmdError::SeriesTooShort {
            len: x.len(),
            min: MIN_SERIES_LEN,
        });
    }
    let input_energy: f64 = x.iter().map(|v| v * v).sum();
    let energy_floor = input_energy * RESIDUAL_ENERGY_FLOOR;
    let mut residual = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < MAX_MODES {
        let (maxima, minima) = find_extrema(&residual);
        if maxima.len() + minima.len() < 2 || is_monotone(&residual) {
            break;
        }
        if residual.iter().map(|v| v * v).sum::<f64>() < energy_floor {
            break;
        }
        let imf = sift(&residual, max_siftings, sift_tolerance);
        for (r, v) in residual.iter_mut().zip(&imf) {
            *r -= v;
        }
        imfs.push(imf);
    }
    Ok(ImfSet { imfs, residual })
}

fn noisy_copy(x: &[f64], sigma: f64, master_seed: u64, trial: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    let mut rng = rng_for(master_seed, Domain::EnsembleTrial, trial);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    x.iter().map(|&v| v + normal.sample(&mut rng)).collect()
}

/// Ensemble decomposition: averages EMD over `ensemble_size` white-noise
/// perturbed copies of the signal.
///
/// Trial `j` perturbs with Gaussian noise of std
/// `noise_amplitude * std(x)` drawn from a stream keyed by
/// `(master_seed, j)`, so the output is identical for a fixed master seed
/// regardless of how trials are scheduled. Mode slots are averaged
/// index-wise; a trial that produced fewer modes than the ensemble maximum
/// contributes its residual to the deepest mode slot so no energy is
/// dropped.
pub fn eemd(x: &[f64], cfg: &EemdConfig) -> Result<ImfSet, EmdError> {
    cfg.validate()?;
    if x.len() < MIN_SERIES_LEN {
        return Err(EmdError::SeriesTooShort {
            len: x.len(),
            min: MIN_SERIES_LEN,
        });
    }
    let sigma = cfg.noise_amplitude * population_std(x);

    let trials: Vec<ImfSet> = (0..cfg.ensemble_size as u64)
        .into_par_iter()
        .map(|j| {
            let noisy = noisy_copy(x, sigma, cfg.master_seed, j);
            emd(&noisy, cfg.max_siftings, cfg.sift_tolerance)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = x.len();
    let deepest = trials.iter().map(|t| t.imfs.len()).max().unwrap_or(0);
    let mut imfs = vec![vec![0.0; n]; deepest];
    let mut residual = vec![0.0; n];
    // Ordered reduction over trial index keeps the result schedule-independent.
    for trial in &trials {
        for (slot, imf) in trial.imfs.iter().enumerate() {
            for (acc, v) in imfs[slot].iter_mut().zip(imf) {
                *acc += v;
            }
        }
        let residual_slot = if trial.imfs.len() == deepest {
            &mut residual
        } else {
            &mut imfs[deepest - 1]
        };
        for (acc, v) in residual_slot.iter_mut().zip(&trial.residual) {
            *acc += v;
        }
    }
    let scale = 1.0 / cfg.ensemble_size as f64;
    for imf in &mut imfs {
        for v in imf.iter_mut() {
            *v *= scale;
        }
    }
    for v in residual.iter_mut() {
        *v *= scale;
    }
    Ok(ImfSet { imfs, residual })
}

/// Appends the newest observation and re-runs the ensemble decomposition
/// over the updated series (or its last `window_cap` samples).
pub fn rolling_decompose(
    history: &[f64],
    new_value: f64,
    cfg: &EemdConfig,
    window_cap: Option<usize>,
) -> Result<ImfSet, EmdError> {
    let mut updated = Vec::with_capacity(history.len() + 1);
    updated.extend_from_slice(history);
    updated.push(new_value);
    let start = window_cap
        .map(|cap| updated.len().saturating_sub(cap))
        .unwrap_or(0);
    eemd(&updated[start..], cfg)
}
