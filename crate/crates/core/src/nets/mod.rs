//! From-scratch LSTM forecasters: the standard stacked network for regular
//! components, the two-branch network over bidirectional features for
//! irregular ones, training via backpropagation through time, and the
//! persistence baseline.

mod features;
mod lstm;
mod network;
mod train;

pub use features::{build_features, latest_features, FeatureTensor};
pub use lstm::{lstm_cell, LstmParams, LstmState, Matrix};
pub use network::{loss_and_grad, Activation, LstmNetwork, NetGrads, NetKind, NetworkSpec};
pub use train::{
    evaluate_mse, train, TrainReport, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, GRADIENT_CLIP_NORM,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("bidirectional-feature network needs backward features")]
    MissingBackwardFeatures,
    #[error("invalid network spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("series too short for feature construction: {len} samples, need {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("empty {which} dataset")]
    EmptyDataset { which: &'static str },
}

/// Naive baseline: repeats the last observed value over the horizon.
pub fn persistence(series: &[f64], horizon: usize) -> Vec<f64> {
    assert!(!series.is_empty(), "persistence needs at least one value");
    vec![*series.last().unwrap(); horizon]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{generate_synthetic, SynthSpec};
    use crate::util::{mean, population_std};

    #[test]
    fn persistence_repeats_the_last_value() {
        assert_eq!(persistence(&[1.0, 4.2], 4), vec![4.2; 4]);
    }

    #[test]
    fn persistence_is_exact_on_constant_series() {
        let series = vec![3.3; 20];
        let pred = persistence(&series[..10], 4);
        for (p, a) in pred.iter().zip(&series[10..14]) {
            assert_eq!(p, a);
        }
    }

    #[test]
    fn persistence_one_step_nrmse_matches_ar1_theory() {
        // For AR(1) with coefficient phi around a positive offset, the
        // one-step persistence error is sigma_x * sqrt(2 (1 - phi)), so
        // nRMSE ~ sqrt(2 (1 - phi)) * sigma_x / mu.
        let phi = 0.9;
        for seed in 0..20 {
            let spec = SynthSpec {
                seed,
                length: 4000,
                ar_coeffs: [phi, 0.0],
                noise_std: 0.3,
                diurnal_amplitude: 0.0,
                offset: 8.0,
                trend_amplitude: 0.0,
            };
            let s = generate_synthetic(&spec).unwrap();
            let v = s.values();
            let mu = mean(v);
            let sigma = population_std(v);
            let mut sq = 0.0;
            let mut count = 0;
            for t in 0..v.len() - 1 {
                let e = v[t + 1] - v[t];
                sq += e * e;
                count += 1;
            }
            let nrmse = (sq / count as f64).sqrt() / mu;
            let expected = (2.0 * (1.0 - phi)).sqrt() * sigma / mu;
            let rel = (nrmse - expected).abs() / expected;
            assert!(
                rel < 0.15,
                "seed {seed}: nrmse {nrmse} vs theory {expected} (rel {rel})"
            );
        }
    }
}
