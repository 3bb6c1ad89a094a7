//! Natural cubic spline envelopes with mirrored boundary knots.

use super::EmdError;

/// Natural cubic spline through strictly increasing knots.
///
/// Uses the second-derivative formulation; the tridiagonal system is solved
/// with the Thomas algorithm. With two knots the spline degenerates to the
/// connecting line.
pub(crate) struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        debug_assert!(xs.len() >= 2 && xs.len() == ys.len());
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let k = xs.len();
        let mut m = vec![0.0; k];
        if k > 2 {
            // Tridiagonal system for interior second derivatives, natural ends.
            let rows = k - 2;
            let mut diag = vec![0.0; rows];
            let mut upper = vec![0.0; rows];
            let mut lower = vec![0.0; rows];
            let mut rhs = vec![0.0; rows];
            for i in 0..rows {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                lower[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            // Thomas algorithm (forward sweep, back substitution).
            for i in 1..rows {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[rows] = rhs[rows - 1] / diag[rows - 1];
            for i in (0..rows - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            xs,
            ys,
            second_derivs: m,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let xs = &self.xs;
        // Index of the segment containing x (clamped to the knot range).
        let seg = match xs.binary_search_by(|probe| probe.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(xs.len() - 2),
        };
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        let (m0, m1) = (self.second_derivs[seg], self.second_derivs[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Envelope through the given extrema, evaluated at every sample index.
///
/// Boundary swing is curbed by mirroring the positions of the two extrema
/// nearest to each endpoint; the mirrored knots take values linearly
/// extrapolated from that boundary pair, so a collinear extrema set stays
/// collinear (a lone extremum extends as a constant). Fails when no
/// extrema are supplied.
pub fn envelope(x: &[f64], extrema: &[usize]) -> Result<Vec<f64>, EmdError> {
    if extrema.is_empty() {
        return Err(EmdError::TooFewExtrema { found: 0 });
    }
    let n = x.len();
    let last = (n - 1) as f64;
    let pts: Vec<(f64, f64)> = extrema.iter().map(|&i| (i as f64, x[i])).collect();

    let extrapolate = |anchor: (f64, f64), other: Option<(f64, f64)>, pos: f64| -> f64 {
        match other {
            Some(o) => anchor.1 + (o.1 - anchor.1) / (o.0 - anchor.0) * (pos - anchor.0),
            None => anchor.1,
        }
    };

    // Interior extrema never sit on the endpoints, so the mirrored knots
    // fall strictly outside [0, n-1] and always bracket the sample range.
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(pts.len() + 4);
    let left_pair = (pts[0], pts.get(1).copied());
    for p in pts.iter().take(2) {
        let pos = -p.0;
        knots.push((pos, extrapolate(left_pair.0, left_pair.1, pos)));
    }
    knots.extend(&pts);
    let right_pair = (
        pts[pts.len() - 1],
        pts.len().checked_sub(2).map(|i| pts[i]),
    );
    for p in pts.iter().rev().take(2) {
        let pos = 2.0 * last - p.0;
        knots.push((pos, extrapolate(right_pair.0, right_pair.1, pos)));
    }
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    knots.dedup_by(|a, b| a.0 == b.0);
    if knots.len() < 2 {
        return Err(EmdError::TooFewExtrema { found: knots.len() });
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    let spline = CubicSpline::new(xs, ys);
    Ok((0..n).map(|i| spline.evaluate(i as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn spline_reproduces_a_line() {
        let xs = vec![0.0, 1.0, 3.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let s = CubicSpline::new(xs, ys);
        for i in 0..=70 {
            let x = i as f64 * 0.1;
            assert!((s.evaluate(x) - (2.0 * x + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn spline_interpolates_knots() {
        let xs = vec![0.0, 1.0, 2.0, 4.0, 5.0];
        let ys = vec![0.0, 3.0, -1.0, 2.0, 0.5];
        let s = CubicSpline::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.evaluate(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_of_collinear_extrema_is_the_line() {
        // extrema values on the line y = 0.5 x + 1
        let n = 30;
        let mut x = vec![0.0; n];
        let extrema = vec![3usize, 9, 15, 21, 27];
        for &e in &extrema {
            x[e] = 0.5 * e as f64 + 1.0;
        }
        let env = envelope(&x, &extrema).unwrap();
        for (i, v) in env.iter().enumerate() {
            let expected = 0.5 * i as f64 + 1.0;
            assert!(
                (v - expected).abs() < 1e-10,
                "at {i}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn single_extremum_resolves_via_mirroring() {
        let mut x = vec![0.0; 11];
        x[5] = 2.0;
        let env = envelope(&x, &[5]).unwrap();
        // mirrored knots share the same value, so the envelope is flat
        for v in env {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_extrema_is_an_error() {
        let x = vec![0.0; 8];
        assert!(matches!(
            envelope(&x, &[]),
            Err(EmdError::TooFewExtrema { found: 0 })
        ));
    }

    #[test]
    fn sine_envelope_tracks_the_amplitude() {
        // 8 periods, 512 samples; envelope through the maxima should sit
        // near the amplitude over the interior.
        let n = 512;
        let periods = 8.0;
        let x: Vec<f64> = (0..n)
            .map(|i| (TAU * periods * i as f64 / n as f64).sin())
            .collect();
        let maxima: Vec<usize> = (1..n - 1)
            .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1])
            .collect();
        let env = envelope(&x, &maxima).unwrap();
        let lo = n / 20;
        let hi = n - n / 20;
        for i in lo..hi {
            assert!(
                (env[i] - 1.0).abs() < 0.02,
                "envelope at {i} was {}",
                env[i]
            );
        }
    }
}
