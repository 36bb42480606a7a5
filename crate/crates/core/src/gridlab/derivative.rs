use super::vec3::Vec3;
use crate::{Error, Result};

/// Fornberg finite-difference weights for derivative `order` at 0 on the
/// given integer-spaced offsets (unit step).
pub fn fd_weights(order: usize, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    assert!(
        n > order,
        "need more stencil points than the derivative order"
    );
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Interior derivative estimates of a uniformly sampled vector series.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivative {
    pub order: usize,
    /// Index in the input series of `values[0]`.
    pub first_index: usize,
    pub values: Vec<Vec3>,
    /// Per-sample step-halving error estimate `|D_h − D_2h| / 3`.
    pub error: Vec<Vec3>,
}

impl Derivative {
    /// Largest component magnitude of the estimate.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_error(&self) -> f64 {
        self.error.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Half-width of the central stencil used at order `n`.
fn half_width(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Minimum series length accepted by [`nth_time_derivative`].
pub fn min_samples(n: usize) -> usize {
    (n + 4).max(4 * half_width(n) + 1)
}

/// Order-`n` central differences at steps `dt` and `2dt`, combined by one
/// Richardson level. Only samples where both stencils fit are returned.
pub fn nth_time_derivative(series: &[Vec3], dt: f64, n: usize) -> Result<Derivative> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "derivative order must be >= 1".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let need = min_samples(n);
    if series.len() < need {
        return Err(Error::TooFewSamples {
            needed: need,
            got: series.len(),
        });
    }
    let r = half_width(n) as isize;
    let offsets: Vec<f64> = (-r..=r).map(|o| o as f64).collect();
    let w = fd_weights(n, &offsets);
    let h1 = dt.powi(n as i32);
    let h2 = (2.0 * dt).powi(n as i32);
    let lo = 2 * r as usize;
    let hi = series.len() - lo;
    let mut values = Vec::with_capacity(hi - lo);
    let mut error = Vec::with_capacity(hi - lo);
    for i in lo..hi {
        let mut d1 = [0.0; 3];
        let mut d2 = [0.0; 3];
        for (j, &wj) in (-r..=r).zip(&w) {
            let a = &series[(i as isize + j) as usize];
            let b = &series[(i as isize + 2 * j) as usize];
            for c in 0..3 {
                d1[c] += wj * a[c];
                d2[c] += wj * b[c];
            }
        }
        let mut v = [0.0; 3];
        let mut e = [0.0; 3];
        for c in 0..3 {
            let dh = d1[c] / h1;
            let d2h = d2[c] / h2;
            v[c] = (4.0 * dh - d2h) / 3.0;
            e[c] = (dh - d2h).abs() / 3.0;
        }
        values.push(v);
        error.push(e);
    }
    Ok(Derivative {
        order: n,
        first_index: lo,
        values,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> Vec<Vec3> {
        (0..n).map(|i| [f(i as f64 * dt - 1.0), 0.0, 0.0]).collect()
    }

    #[test]
    fn known_weights() {
        let w = fd_weights(2, &[-1.0, 0.0, 1.0]);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = fd_weights(1, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let want = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn square_second_and_third_derivatives() {
        let s = sample(|t| t * t, 20, 0.1);
        let d2 = nth_time_derivative(&s, 0.1, 2).unwrap();
        assert!(d2.values.iter().all(|v| (v[0] - 2.0).abs() < 1e-6));
        let d3 = nth_time_derivative(&s, 0.1, 3).unwrap();
        assert!(d3.values.iter().all(|v| v[0].abs() < 1e-6));
    }

    #[test]
    fn sine_within_reported_bound() {
        let (w, dt) = (1.7, 0.05);
        let s = sample(|t| (w * t).sin(), 60, dt);
        let d = nth_time_derivative(&s, dt, 1).unwrap();
        for (k, v) in d.values.iter().enumerate() {
            let t = (d.first_index + k) as f64 * dt - 1.0;
            let err = (v[0] - w * (w * t).cos()).abs();
            // estimator bounds the un-extrapolated error; Richardson is tighter
            assert!(err <= d.error[k][0] + 1e-12, "{err} > {}", d.error[k][0]);
            assert!(err < 1e-5);
        }
    }

    #[test]
    fn too_few_samples() {
        let s = sample(|t| t, 8, 0.1);
        assert_eq!(
            nth_time_derivative(&s, 0.1, 4),
            Err(Error::TooFewSamples { needed: 9, got: 8 })
        );
    }

    #[test]
    fn polynomial_below_order_is_numerically_zero() {
        let dt = 0.25;
        for n in 1..=4 {
            let s = sample(
                |t| (0..n).map(|p| (p as f64 + 1.0) * t.powi(p as i32)).sum(),
                40,
                dt,
            );
            let scale = s.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
            let d = nth_time_derivative(&s, dt, n).unwrap();
            assert!(
                d.max_abs() <= 1e-9 * scale / dt.powi(n as i32),
                "n={n}: {}",
                d.max_abs()
            );
        }
    }
}
