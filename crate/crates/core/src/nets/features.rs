//! Feature construction: current-day past window, previous-day past
//! window, and (for bidirectional-feature networks) the reversed
//! previous-day future window.

use serde::{Deserialize, Serialize};

use super::network::NetKind;
use super::NetError;

/// One training/inference sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    /// `[x_{t-m}..x_{t-1}]` followed by `[x_{t-d-m}..x_{t-d-1}]` for
    /// day stride `d`.
    pub forward_in: Vec<f64>,
    /// `[x_{t-d+n}, .., x_{t-d+1}]` (previous-day future, reversed);
    /// present only for bidirectional-feature networks.
    pub backward_in: Option<Vec<f64>>,
    /// `[x_t..x_{t+n-1}]`.
    pub target: Vec<f64>,
}

fn assemble(
    values: &[f64],
    t: usize,
    kind: NetKind,
    m: usize,
    n: usize,
    day_stride: usize,
) -> FeatureTensor {
    let mut forward_in = Vec::with_capacity(2 * m);
    forward_in.extend_from_slice(&values[t - m..t]);
    forward_in.extend_from_slice(&values[t - day_stride - m..t - day_stride]);
    let backward_in = match kind {
        NetKind::Standard => None,
        NetKind::BiFeature => Some(
            (1..=n)
                .rev()
                .map(|j| values[t - day_stride + j])
                .collect(),
        ),
    };
    FeatureTensor {
        forward_in,
        backward_in,
        target: values[t..t + n].to_vec(),
    }
}

/// Builds one sample per target time `t`, keeping only targets with a full
/// previous day behind them: `t` ranges over `m + day_stride ..= len - n`.
/// Returns `(t, tensor)` pairs so callers can split chronologically.
pub fn build_features(
    values: &[f64],
    kind: NetKind,
    m: usize,
    n: usize,
    day_stride: usize,
) -> Result<Vec<(usize, FeatureTensor)>, NetError> {
    let first = m + day_stride;
    if values.len() < first + n {
        return Err(NetError::SeriesTooShort {
            len: values.len(),
            min: first + n,
        });
    }
    Ok((first..=values.len() - n)
        .map(|t| (t, assemble(values, t, kind, m, n, day_stride)))
        .collect())
}

/// Features for forecasting the `n` values after the end of `values`
/// (target time `t = len`). The target field is left empty.
pub fn latest_features(
    values: &[f64],
    kind: NetKind,
    m: usize,
    n: usize,
    day_stride: usize,
) -> Result<FeatureTensor, NetError> {
    // t = len: needs the previous-day future window to stay in range.
    if values.len() < m + day_stride || n >= day_stride {
        return Err(NetError::SeriesTooShort {
            len: values.len(),
            min: m + day_stride,
        });
    }
    let t = values.len();
    let mut forward_in = Vec::with_capacity(2 * m);
    forward_in.extend_from_slice(&values[t - m..t]);
    forward_in.extend_from_slice(&values[t - day_stride - m..t - day_stride]);
    let backward_in = match kind {
        NetKind::Standard => None,
        NetKind::BiFeature => Some(
            (1..=n)
                .rev()
                .map(|j| values[t - day_stride + j])
                .collect(),
        ),
    };
    Ok(FeatureTensor {
        forward_in,
        backward_in,
        target: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_match_hand_computation() {
        // t = 30, m = 3, n = 1, day stride 24
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let rows = build_features(&values, NetKind::BiFeature, 3, 1, 24).unwrap();
        let (t, row) = rows.iter().find(|(t, _)| *t == 30).unwrap();
        assert_eq!(*t, 30);
        assert_eq!(row.forward_in, vec![27.0, 28.0, 29.0, 3.0, 4.0, 5.0]);
        assert_eq!(row.backward_in.as_deref(), Some(&[7.0][..]));
        assert_eq!(row.target, vec![30.0]);
    }

    #[test]
    fn reversed_backward_window() {
        let values: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let rows = build_features(&values, NetKind::BiFeature, 2, 3, 24).unwrap();
        let (t, row) = &rows[0];
        // first row: t = m + day_stride = 26; backward = [x5, x4, x3]
        assert_eq!(*t, 26);
        assert_eq!(row.backward_in.as_deref(), Some(&[5.0, 4.0, 3.0][..]));
        assert_eq!(row.target, vec![26.0, 27.0, 28.0]);
    }

    #[test]
    fn early_samples_produce_no_rows() {
        let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let rows = build_features(&values, NetKind::Standard, 3, 1, 24).unwrap();
        // first valid target is t = 27
        assert_eq!(rows[0].0, 27);
        assert_eq!(rows.len(), 40 - 1 - 27 + 1);
        assert!(matches!(
            build_features(&values[..27], NetKind::Standard, 3, 1, 24),
            Err(NetError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn periodic_signal_repeats_day_blocks() {
        let values: Vec<f64> = (0..96)
            .map(|i| (std::f64::consts::TAU * i as f64 / 24.0).sin())
            .collect();
        let rows = build_features(&values, NetKind::Standard, 4, 2, 24).unwrap();
        for (_, row) in rows {
            let (today, yesterday) = row.forward_in.split_at(4);
            for (a, b) in today.iter().zip(yesterday) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn latest_features_align_with_training_rows() {
        let values: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let m = 3;
        let n = 2;
        // Training row at t = 50 must equal latest_features of values[..50].
        let rows = build_features(&values, NetKind::BiFeature, m, n, 24).unwrap();
        let (_, row) = rows.iter().find(|(t, _)| *t == 50).unwrap();
        let latest = latest_features(&values[..50], NetKind::BiFeature, m, n, 24).unwrap();
        assert_eq!(latest.forward_in, row.forward_in);
        assert_eq!(latest.backward_in, row.backward_in);
        assert!(latest.target.is_empty());
    }
}
