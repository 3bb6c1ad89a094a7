//! Error metrics, the forecasting-deviation statistic, and rank
//! aggregation across models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {pred} predictions vs {actual} actuals")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("empty input")]
    Empty,
    #[error("mean of actuals is zero; nRMSE undefined")]
    ZeroMeanActual,
    #[error("mean simple nRMSE equals 1; forecasting deviation undefined")]
    DegenerateDenominator,
    #[error("empty error table")]
    EmptyTable,
    #[error("error table contains a non-finite entry")]
    NonFiniteEntry,
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<(), MetricsError> {
    if pred.is_empty() || actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            actual: actual.len(),
        });
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, actual)?;
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, actual)?;
    Ok((pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64)
        .sqrt())
}

/// RMSE normalized by the mean of the actual values.
pub fn nrmse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    let r = rmse(pred, actual)?;
    let mu = actual.iter().sum::<f64>() / actual.len() as f64;
    if mu == 0.0 {
        return Err(MetricsError::ZeroMeanActual);
    }
    Ok(r / mu)
}

/// Absolute percentage gap in forecast accuracy between terrain groups:
/// `|((1 - mean(complex)) - (1 - mean(simple))) / (1 - mean(simple))| * 100`.
pub fn forecast_deviation(
    simple_nrmses: &[f64],
    complex_nrmses: &[f64],
) -> Result<f64, MetricsError> {
    if simple_nrmses.is_empty() || complex_nrmses.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let acc_simple = 1.0 - mean(simple_nrmses);
    let acc_complex = 1.0 - mean(complex_nrmses);
    if acc_simple.abs() < 1e-12 {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok(((acc_complex - acc_simple) / acc_simple * 100.0).abs())
}

/// Mean rank per model over an errors table (`table[model][case]`,
/// ascending error is better). Ties share the average of their ranks.
pub fn mean_rank(table: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    if table.is_empty() || table[0].is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    let models = table.len();
    let cases = table[0].len();
    for row in table {
        if row.len() != cases {
            return Err(MetricsError::LengthMismatch {
                pred: row.len(),
                actual: cases,
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteEntry);
        }
    }

    let mut sums = vec![0.0; models];
    for case in 0..cases {
        let mut order: Vec<usize> = (0..models).collect();
        order.sort_by(|&a, &b| table[a][case].total_cmp(&table[b][case]));
        let mut pos = 0;
        while pos < models {
            let mut end = pos + 1;
            while end < models && table[order[end]][case] == table[order[pos]][case] {
                end += 1;
            }
            // positions pos..end share the average rank
            let rank = (pos + 1..=end).sum::<usize>() as f64 / (end - pos) as f64;
            for &model in &order[pos..end] {
                sums[model] += rank;
            }
            pos = end;
        }
    }
    Ok(sums.into_iter().map(|s| s / cases as f64).collect())
}

/// One aggregated evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub station: String,
    pub terrain: String,
    pub season: String,
    pub horizon: usize,
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub mean_actual: f64,
    pub count: usize,
}

impl MetricRow {
    /// Computes the three error metrics for a prediction/actual pairing.
    pub fn compute(
        station: &str,
        terrain: &str,
        season: &str,
        horizon: usize,
        model: &str,
        pred: &[f64],
        actual: &[f64],
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            station: station.to_string(),
            terrain: terrain.to_string(),
            season: season.to_string(),
            horizon,
            model: model.to_string(),
            mae: mae(pred, actual)?,
            rmse: rmse(pred, actual)?,
            nrmse: nrmse(pred, actual)?,
            mean_actual: actual.iter().sum::<f64>() / actual.len() as f64,
            count: actual.len(),
        })
    }
}

/// Full evaluation output: per-cell metrics, per-model mean ranks, and the
/// simple-vs-complex terrain deviation when both terrains are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub mean_ranks: Vec<(String, f64)>,
    pub forecast_deviation_pct: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{rng_for, Domain};
    use rand::Rng;

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[2.0, 4.0], &[2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 1.5);
    }

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert!((r - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rmse_of_constant_offset_is_the_offset() {
        let actual = [3.0, 5.5, 4.2, 6.1];
        let pred: Vec<f64> = actual.iter().map(|a| a + 0.7).collect();
        assert!((rmse(&pred, &actual).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn mae_never_exceeds_rmse() {
        let mut rng = rng_for(1, Domain::Synthetic, 8000);
        for _ in 0..1000 {
            let n = rng.gen_range(1..30);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let actual: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = mae(&pred, &actual).unwrap();
            let r = rmse(&pred, &actual).unwrap();
            assert!(m <= r + 1e-12, "mae {m} > rmse {r}");
        }
    }

    #[test]
    fn nrmse_is_rmse_over_mean() {
        let actual = [5.0, 5.0];
        let pred = [4.5, 5.5];
        assert!((nrmse(&pred, &actual).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            nrmse(&[1.0, -1.0], &[1.0, -1.0]),
            Err(MetricsError::ZeroMeanActual)
        ));
    }

    #[test]
    fn nrmse_is_scale_invariant() {
        let mut rng = rng_for(2, Domain::Synthetic, 8100);
        let pred: Vec<f64> = (0..20).map(|_| rng.gen_range(1.0..9.0)).collect();
        let actual: Vec<f64> = (0..20).map(|_| rng.gen_range(1.0..9.0)).collect();
        let base = nrmse(&pred, &actual).unwrap();
        for _ in 0..20 {
            let c: f64 = rng.gen_range(0.01..100.0);
            let p: Vec<f64> = pred.iter().map(|v| v * c).collect();
            let a: Vec<f64> = actual.iter().map(|v| v * c).collect();
            assert!((nrmse(&p, &a).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn deviation_matches_published_rows() {
        // 0.1222 simple vs 0.2014 complex reported as 9.01; exact formula
        // value is 9.02.
        let fd = forecast_deviation(&[0.1222], &[0.2014]).unwrap();
        assert!((fd - 9.02).abs() <= 0.02, "fd {fd}");
        let fd2 = forecast_deviation(&[0.3661], &[0.3537]).unwrap();
        assert!((fd2 - 1.96).abs() <= 0.02, "fd {fd2}");
    }

    #[test]
    fn deviation_of_identical_groups_is_zero() {
        let xs = [0.12, 0.2, 0.31];
        assert_eq!(forecast_deviation(&xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn deviation_ignores_order_within_groups() {
        let a = [0.1, 0.2, 0.3];
        let b = [0.3, 0.1, 0.2];
        let c = [0.25, 0.15];
        assert_eq!(
            forecast_deviation(&a, &c).unwrap(),
            forecast_deviation(&b, &c).unwrap()
        );
    }

    #[test]
    fn deviation_degenerate_denominator() {
        assert!(matches!(
            forecast_deviation(&[1.0], &[0.5]),
            Err(MetricsError::DegenerateDenominator)
        ));
    }

    #[test]
    fn single_case_ranks_by_error() {
        let table = vec![vec![0.1], vec![0.2], vec![0.3]];
        assert_eq!(mean_rank(&table).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_way_tie_shares_rank() {
        let table = vec![vec![0.1], vec![0.1], vec![0.3]];
        assert_eq!(mean_rank(&table).unwrap(), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn rank_sums_are_conserved() {
        let mut rng = rng_for(3, Domain::Synthetic, 8200);
        let models = 5;
        let cases = 10;
        let table: Vec<Vec<f64>> = (0..models)
            .map(|_| (0..cases).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let ranks = mean_rank(&table).unwrap();
        // per case ranks sum to M(M+1)/2 = 15, so mean ranks sum to 15 too
        let total: f64 = ranks.iter().sum();
        assert!((total - 15.0).abs() < 1e-9, "rank total {total}");
    }

    #[test]
    fn table_errors() {
        assert!(matches!(mean_rank(&[]), Err(MetricsError::EmptyTable)));
        assert!(matches!(
            mean_rank(&[vec![0.1], vec![f64::NAN]]),
            Err(MetricsError::NonFiniteEntry)
        ));
    }
}
