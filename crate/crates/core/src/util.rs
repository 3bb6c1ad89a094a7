//! Small shared numeric helpers.

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by n).
pub(crate) fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64).sqrt()
}
