//! Local extrema detection for sifting.

/// Finds strict local maxima and minima. A plateau of equal values counts
/// as one extremum at its midpoint index (floored); endpoints are never
/// reported.
pub fn find_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = x.len();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    if n < 3 {
        return (maxima, minima);
    }

    // Walk runs of equal values; a run strictly above (below) both
    // neighbouring values is a maximum (minimum).
    let mut run_start = 0;
    for i in 1..=n {
        if i < n && x[i] == x[run_start] {
            continue;
        }
        let run_end = i - 1;
        if run_start > 0 && run_end < n - 1 {
            let v = x[run_start];
            let left = x[run_start - 1];
            let right = x[run_end + 1];
            let mid = (run_start + run_end) / 2;
            if v > left && v > right {
                maxima.push(mid);
            } else if v < left && v < right {
                minima.push(mid);
            }
        }
        run_start = i;
    }
    (maxima, minima)
}
