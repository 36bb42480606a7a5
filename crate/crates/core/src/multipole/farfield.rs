use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::moments::{contract, multinomial, MomentHistory, MomentSeries};
use crate::gridlab::vec3::{cross, dot, norm, normalized, scale};
use crate::gridlab::{
    min_samples, nth_time_derivative, scalar_spectrum, Spectrum, SphereQuadrature, Vec3, Window,
};
use crate::{Error, Result};

/// Observation direction, sphere radius and speed of light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationGeometry {
    direction: Vec3,
    r0: f64,
    c: f64,
}

impl ObservationGeometry {
    /// Normalizes `direction`.
    pub fn new(direction: Vec3, r0: f64, c: f64) -> Result<Self> {
        let direction = normalized(direction).ok_or_else(|| {
            Error::InvalidParameter("observation direction must be nonzero".into())
        })?;
        if !(r0 > 0.0 && r0.is_finite()) || !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need R0 > 0 and c > 0, got {r0}, {c}"
            )));
        }
        Ok(Self { direction, r0, c })
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Rejects `R0 < 50 × extent`.
    pub fn check_far_zone(&self, extent: f64) -> Result<()> {
        if self.r0 < 50.0 * extent {
            Err(Error::InvalidParameter(format!(
                "R0 = {} is not far: needs at least 50 × source extent {extent}",
                self.r0
            )))
        } else {
            Ok(())
        }
    }
}

/// `(1/c)^{m-1} / (m-1)!`.
fn series_weight(m: usize, c: f64) -> f64 {
    let f: f64 = (1..m).map(|v| v as f64).product();
    c.powi(1 - m as i32) / f
}

/// `−n̂ × S / (c² R0)` for one series term already weighted.
fn term_b(n: Vec3, s: Vec3, r0: f64, c: f64) -> Vec3 {
    scale(cross(n, s), -1.0 / (c * c * r0))
}

/// One far-field sample along a direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarFieldSample {
    pub t_emit: f64,
    pub t_obs: f64,
    pub b: Vec3,
    pub e: Vec3,
    /// `|B_m|` of each series term.
    pub term_magnitudes: Vec<f64>,
    /// `|B|` bound from the derivative error estimates.
    pub b_error: f64,
}

/// Derivatives `∂^m X_m` of one family of series aligned on the common
/// interior `[first, first + len)`.
struct Aligned {
    first: usize,
    len: usize,
    values: Vec<Vec<Vec3>>,
    errors: Vec<Vec<Vec3>>,
}

fn align(
    series_per_order: &[(usize, Vec<Vec3>)],
    n_samples: usize,
    dt: f64,
    max_order: usize,
) -> Result<Aligned> {
    let need = min_samples(max_order);
    if n_samples < need {
        return Err(Error::TooFewSamples {
            needed: need,
            got: n_samples,
        });
    }
    let first = 2 * max_order.div_ceil(2).max(1);
    let len = n_samples - 2 * first;
    let mut values = Vec::with_capacity(series_per_order.len());
    let mut errors = Vec::with_capacity(series_per_order.len());
    for (m, s) in series_per_order {
        let d = nth_time_derivative(s, dt, *m)?;
        let off = first - d.first_index;
        values.push(d.values[off..off + len].to_vec());
        errors.push(d.error[off..off + len].to_vec());
    }
    Ok(Aligned {
        first,
        len,
        values,
        errors,
    })
}

/// Far field at `t_obs` from the moment series of `geometry.direction()`.
/// `t_obs − R0/c` must be an interior sample time.
pub fn farfield_b(
    series: &MomentSeries,
    geometry: &ObservationGeometry,
    t_obs: f64,
) -> Result<FarFieldSample> {
    let n = geometry.direction();
    if (norm(series.direction) - 1.0).abs() > 1e-12
        || norm(cross(n, series.direction)) > 1e-12
        || dot(n, series.direction) < 0.0
    {
        return Err(Error::InvalidParameter(
            "series and geometry directions differ".into(),
        ));
    }
    let (r0, c) = (geometry.r0(), geometry.c());
    let t_emit = t_obs - r0 / c;
    let idx = series.times.index_of(t_emit).ok_or_else(|| {
        Error::InvalidParameter(format!("retarded time {t_emit} is not a sample time"))
    })?;
    let per: Vec<(usize, Vec<Vec3>)> = (1..=series.max_order)
        .map(|m| (m, series.order(m).to_vec()))
        .collect();
    let al = align(
        &per,
        series.times.len(),
        series.times.dt(),
        series.max_order,
    )?;
    if idx < al.first || idx >= al.first + al.len {
        return Err(Error::HistoryWindow {
            need_start: t_emit,
            need_end: t_emit,
            have_start: series.times.time(al.first),
            have_end: series.times.time(al.first + al.len - 1),
        });
    }
    let i = idx - al.first;
    let mut b = [0.0; 3];
    let mut b_error = 0.0;
    let mut term_magnitudes = Vec::with_capacity(series.max_order);
    for m in 1..=series.max_order {
        let w = series_weight(m, c);
        let bm = term_b(n, scale(al.values[m - 1][i], w), r0, c);
        b_error += norm(al.errors[m - 1][i]) * w / (c * c * r0);
        term_magnitudes.push(norm(bm));
        for a in 0..3 {
            b[a] += bm[a];
        }
    }
    Ok(FarFieldSample {
        t_emit,
        t_obs,
        b,
        e: farfield_e(b, n),
        term_magnitudes,
        b_error,
    })
}

/// `E = −n̂ × B`.
pub fn farfield_e(b: Vec3, n: Vec3) -> Vec3 {
    scale(cross(n, b), -1.0)
}

/// `(c/4π) ∮ (E × B)·n̂ dA` from `(E, B)` at every sphere node.
pub fn radiated_power(sphere: &SphereQuadrature, fields: &[(Vec3, Vec3)], c: f64) -> f64 {
    assert_eq!(fields.len(), sphere.nodes().len());
    let flux: Vec<f64> = sphere
        .nodes()
        .iter()
        .zip(fields)
        .map(|(n, (e, b))| dot(cross(*e, *b), n.direction))
        .collect();
    c / (4.0 * PI) * sphere.integrate_values(&flux)
}

/// `(2/3) q² a² / c³`.
pub fn larmor_power(a: Vec3, q: f64, c: f64) -> f64 {
    2.0 / 3.0 * q * q * dot(a, a) / (c * c * c)
}

/// Far fields over the sphere and the radiated power series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiationReport {
    pub max_order: usize,
    pub r0: f64,
    pub c: f64,
    pub t_emit: Vec<f64>,
    pub t_obs: Vec<f64>,
    /// `power[i]` at `t_obs[i]`.
    pub power: Vec<f64>,
    /// `term_power[m - 1][i]`: power of the `m`-th series term alone.
    pub term_power: Vec<Vec<f64>>,
    /// `(E, B)` per time, per sphere node.
    pub fields: Vec<Vec<(Vec3, Vec3)>>,
    pub directions: Vec<Vec3>,
    /// Largest `|B|` consistent with numerically-zero moment derivatives.
    pub b_zero: f64,
    /// `c R0² b_zero²`: the matching power threshold.
    pub power_zero: f64,
    /// Largest `|B|` error implied by the derivative estimates.
    pub b_error: f64,
    pub spectrum: Option<Spectrum>,
}

impl RadiationReport {
    pub fn max_power(&self) -> f64 {
        self.power.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of the sample whose emission time is closest to `t`.
    pub fn nearest(&self, t_emit: f64) -> usize {
        let mut best = 0;
        for (i, t) in self.t_emit.iter().enumerate() {
            if (t - t_emit).abs() < (self.t_emit[best] - t_emit).abs() {
                best = i;
            }
        }
        best
    }

    /// Max over time of each term's power.
    pub fn term_peaks(&self) -> Vec<f64> {
        self.term_power
            .iter()
            .map(|p| p.iter().cloned().fold(0.0, f64::max))
            .collect()
    }
}

/// Assembles the truncated series on every sphere node at every interior
/// sample of the history and integrates the Poynting flux. `zero_tol` is
/// the derivative tolerance used to define `b_zero`.
pub fn radiate(
    history: &MomentHistory,
    sphere: &SphereQuadrature,
    c: f64,
    zero_tol: f64,
) -> Result<RadiationReport> {
    let exps = history.exponents().to_vec();
    let max_order = history.max_order;
    let dt = history.times.dt();
    let r0 = sphere.radius();
    let per: Vec<(usize, Vec<Vec3>)> = exps
        .iter()
        .enumerate()
        .map(|(k, e)| (e[0] + e[1] + e[2] + 1, history.tensor_series(k)))
        .collect();
    let al = align(&per, history.times.len(), dt, max_order)?;
    let dirs: Vec<Vec3> = sphere.nodes().iter().map(|n| n.direction).collect();
    // direction weights multinomial(α) n̂^α per monomial
    let dir_w: Vec<Vec<f64>> = dirs
        .iter()
        .map(|n| {
            exps.iter()
                .map(|e| {
                    multinomial(*e)
                        * n[0].powi(e[0] as i32)
                        * n[1].powi(e[1] as i32)
                        * n[2].powi(e[2] as i32)
                })
                .collect()
        })
        .collect();
    let mut power = Vec::with_capacity(al.len);
    let mut term_power = vec![Vec::with_capacity(al.len); max_order];
    let mut fields = Vec::with_capacity(al.len);
    let mut b_error: f64 = 0.0;
    for i in 0..al.len {
        let mut node_fields = Vec::with_capacity(dirs.len());
        let mut term_b2 = vec![Vec::with_capacity(dirs.len()); max_order];
        for (n, w) in dirs.iter().zip(&dir_w) {
            let mut s = vec![[0.0; 3]; max_order];
            let mut err = 0.0;
            for (k, e) in exps.iter().enumerate() {
                let m = e[0] + e[1] + e[2] + 1;
                let d = al.values[k][i];
                for a in 0..3 {
                    s[m - 1][a] += w[k] * d[a];
                }
                err += w[k].abs() * norm(al.errors[k][i]) * series_weight(m, c);
            }
            let mut b = [0.0; 3];
            for m in 1..=max_order {
                let bm = term_b(*n, scale(s[m - 1], series_weight(m, c)), r0, c);
                term_b2[m - 1].push(dot(bm, bm));
                for a in 0..3 {
                    b[a] += bm[a];
                }
            }
            b_error = b_error.max(err / (c * c * r0));
            node_fields.push((farfield_e(b, *n), b));
        }
        power.push(radiated_power(sphere, &node_fields, c));
        for m in 0..max_order {
            term_power[m].push(c / (4.0 * PI) * sphere.integrate_values(&term_b2[m]));
        }
        fields.push(node_fields);
    }
    // numerically-zero field level from the window peaks of I_m
    let mut b_zero = 0.0;
    for m in 1..=max_order {
        let peak = dirs
            .iter()
            .flat_map(|n| {
                history
                    .samples
                    .iter()
                    .map(move |s| norm(contract(&s.exponents, &s.values, *n, m)))
            })
            .fold(0.0, f64::max);
        b_zero += zero_tol * peak / dt.powi(m as i32) * series_weight(m, c) / (c * c * r0);
    }
    let t_emit: Vec<f64> = (0..al.len)
        .map(|i| history.times.time(al.first + i))
        .collect();
    let t_obs = t_emit.iter().map(|t| t + r0 / c).collect();
    let spectrum = if power.len() >= 32 {
        Some(scalar_spectrum(&power, dt, Window::default())?)
    } else {
        None
    };
    Ok(RadiationReport {
        max_order,
        r0,
        c,
        t_emit,
        t_obs,
        power,
        term_power,
        fields,
        directions: dirs,
        b_zero,
        power_zero: c * r0 * r0 * b_zero * b_zero,
        b_error,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e_from_b() {
        assert_eq!(farfield_e([0.0; 3], [0.0, 0.0, 1.0]), [0.0; 3]);
        assert_eq!(
            farfield_e([0.0, 2.0, 0.0], [0.0, 0.0, 1.0]),
            [2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn larmor_values() {
        assert_eq!(larmor_power([0.0; 3], 1.0, 1.0), 0.0);
        assert!((larmor_power([0.0, 1.0, 0.0], 1.0, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        let p1 = larmor_power([0.1, 0.2, 0.3], 1.3, 2.0);
        let p2 = larmor_power([0.2, 0.4, 0.6], 1.3, 2.0);
        assert!((p2 / p1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dipole_pattern_power() {
        // unit-amplitude pattern: B = (ẑ × n̂)/R0, |B|² = sin²θ/R0²
        let r0 = 3.0;
        let sphere = SphereQuadrature::new(r0, 4, 8).unwrap();
        let f: Vec<(Vec3, Vec3)> = sphere
            .nodes()
            .iter()
            .map(|n| {
                let b = scale(cross([0.0, 0.0, 1.0], n.direction), 1.0 / r0);
                (farfield_e(b, n.direction), b)
            })
            .collect();
        let p = radiated_power(&sphere, &f, 1.0);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_validation() {
        let g = ObservationGeometry::new([0.0, 3.0, 4.0], 100.0, 1.0).unwrap();
        assert!((norm(g.direction()) - 1.0).abs() < 1e-15);
        assert!(g.check_far_zone(2.0).is_ok());
        assert!(g.check_far_zone(2.1).is_err());
        assert!(ObservationGeometry::new([0.0; 3], 1.0, 1.0).is_err());
    }
}
