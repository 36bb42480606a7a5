use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::vec3::Vec3;

/// Least-squares polynomial fits of increasing degree to a vector series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// Smallest degree meeting the tolerance, if any.
    pub certified_degree: Option<usize>,
    /// Relative RMS residual for degrees `0..=max_degree`.
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    /// Normalization: peak vector norm over the series.
    pub scale: f64,
    /// Set when the series is shorter than `max_degree + 5`; no degree is
    /// certified in that case.
    pub insufficient_samples: bool,
}

impl PolyFit {
    pub fn certifies_at_most(&self, degree: usize) -> bool {
        self.certified_degree.is_some_and(|d| d <= degree)
    }

    /// Residual of the fit at `degree`, if it was computed.
    pub fn residual_at(&self, degree: usize) -> Option<f64> {
        self.residuals.get(degree).copied()
    }
}

impl fmt::Display for PolyFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.insufficient_samples, self.certified_degree) {
            (true, _) => write!(f, "insufficient samples"),
            (false, Some(d)) => write!(f, "degree {d}"),
            (false, None) => write!(f, "non-polynomial"),
        }
    }
}

/// Legendre values `P_0..P_max(x)`.
fn legendre_row(x: f64, max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(max + 1);
    p.push(1.0);
    if max >= 1 {
        p.push(x);
    }
    for k in 2..=max {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
        p.push(next);
    }
    p
}

/// Fits degrees `0..=max_degree` on the time axis mapped to `[-1, 1]`. The
/// certified degree is the smallest whose RMS residual, relative to the
/// peak vector norm, is at most `tol`. A zero series certifies at degree 0.
pub fn fit_polynomial_degree(
    times: &[f64],
    series: &[Vec3],
    max_degree: usize,
    tol: f64,
) -> PolyFit {
    assert_eq!(times.len(), series.len());
    let n = series.len();
    let scale = series
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0, f64::max);
    if n < max_degree + 5 {
        return PolyFit {
            certified_degree: None,
            residuals: Vec::new(),
            tolerance: tol,
            scale,
            insufficient_samples: true,
        };
    }
    let t0 = times[0];
    let t1 = times[n - 1];
    let mid = 0.5 * (t0 + t1);
    let half = 0.5 * (t1 - t0);
    let rows: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| legendre_row(if half > 0.0 { (t - mid) / half } else { 0.0 }, max_degree))
        .collect();
    let mut residuals = Vec::with_capacity(max_degree + 1);
    for deg in 0..=max_degree {
        if scale == 0.0 {
            residuals.push(0.0);
            continue;
        }
        let a = DMatrix::from_fn(n, deg + 1, |i, j| rows[i][j]);
        let svd = a.clone().svd(true, true);
        let mut ss = 0.0;
        for c in 0..3 {
            let b = DVector::from_iterator(n, series.iter().map(|v| v[c] / scale));
            let coef = svd.solve(&b, 1e-14).expect("SVD computed with U and V");
            let r = &a * coef - b;
            ss += r.norm_squared();
        }
        residuals.push((ss / n as f64).sqrt());
    }
    let certified_degree = residuals.iter().position(|&r| r <= tol);
    PolyFit {
        certified_degree,
        residuals,
        tolerance: tol,
        scale,
        insufficient_samples: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn axis(n: usize, t0: f64, t1: f64) -> Vec<f64> {
        (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn linear_series_is_degree_one() {
        let t = axis(30, -2.0, 5.0);
        let s: Vec<Vec3> = t.iter().map(|&t| [3.0 + 2.0 * t, 0.0, 0.0]).collect();
        let fit = fit_polynomial_degree(&t, &s, 4, 1e-8);
        assert_eq!(fit.certified_degree, Some(1));
        assert!(fit.residuals[0] > 1e-2);
        assert_eq!(fit.to_string(), "degree 1");
    }

    #[test]
    fn full_period_cosine_is_non_polynomial() {
        let t = axis(64, 0.0, 2.0 * PI);
        let s: Vec<Vec3> = t.iter().map(|&t| [t.cos(), 0.0, 0.0]).collect();
        let fit = fit_polynomial_degree(&t, &s, 4, 1e-8);
        assert_eq!(fit.certified_degree, None);
        assert_eq!(fit.to_string(), "non-polynomial");
    }

    #[test]
    fn short_series_is_flagged() {
        let t = axis(6, 0.0, 1.0);
        let s = vec![[1.0, 0.0, 0.0]; 6];
        let fit = fit_polynomial_degree(&t, &s, 3, 1e-8);
        assert!(fit.insufficient_samples);
        assert!(!fit.certifies_at_most(3));
    }

    #[test]
    fn vector_cubic_on_offset_axis() {
        let t = axis(40, 1000.0, 1010.0);
        let s: Vec<Vec3> = t
            .iter()
            .map(|&t| {
                let u = t - 1003.0;
                [u * u * u, 1.0 - u, 0.5 * u * u]
            })
            .collect();
        let fit = fit_polynomial_degree(&t, &s, 5, 1e-10);
        assert_eq!(fit.certified_degree, Some(3));
    }
}
