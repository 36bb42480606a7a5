use std::f64::consts::PI;

use super::grid::{FieldGrid, Payload};
use super::reduce::tree_reduce;
use super::vec3::Vec3;
use crate::{Error, Result};

/// Midpoint-rule integral `Σ value · weight(x) · ΔV` with a fixed reduction
/// tree. Rejects the first non-finite node value.
pub fn integrate_grid<T, W>(field: &FieldGrid<T>, weight: W) -> Result<T>
where
    T: Payload,
    W: Fn(Vec3) -> f64 + Sync,
{
    field.ensure_finite()?;
    let grid = field.grid();
    let values = field.values();
    let total = tree_reduce(
        values.len(),
        |r| {
            let mut acc = T::zero();
            for i in r {
                acc = acc.add(values[i].scale(weight(grid.node(i))));
            }
            acc
        },
        |a, b| a.add(b),
    )
    .unwrap_or_else(T::zero);
    Ok(total.scale(grid.cell_volume()))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereNode {
    pub direction: Vec3,
    pub weight: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Product rule on a sphere of radius `R0`: Gauss–Legendre in `cos θ`
/// times uniform nodes in `φ`. Weights carry the `R0²` area factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadrature {
    radius: f64,
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<SphereNode>,
}

impl SphereQuadrature {
    pub fn new(radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        if n_theta < 1 || n_phi < 1 {
            return Err(Error::InvalidParameter(
                "sphere needs n_theta >= 1 and n_phi >= 1".into(),
            ));
        }
        let (mu, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (&c, &wt) in mu.iter().zip(&w) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                nodes.push(SphereNode {
                    direction: [s * phi.cos(), s * phi.sin(), c],
                    weight: wt * dphi * radius * radius,
                    theta: c.acos(),
                    phi,
                });
            }
        }
        Ok(Self {
            radius,
            n_theta,
            n_phi,
            nodes,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    pub fn nodes(&self) -> &[SphereNode] {
        &self.nodes
    }

    /// Same angular rule on a sphere of a different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(radius, self.n_theta, self.n_phi)
    }

    /// `Σ w_i v_i` for values given in node order.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.nodes.len());
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .zip(values)
            .map(|(n, v)| n.weight * v)
            .collect();
        pairwise(&vals)
    }

    /// `∮ f(n̂) dA`.
    pub fn integrate<F: Fn(Vec3) -> f64>(&self, f: F) -> f64 {
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| n.weight * f(n.direction))
            .collect();
        pairwise(&vals)
    }
}

fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise(a) + pairwise(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridlab::grid::UniformGrid3;

    #[test]
    fn constant_field_integrates_to_box_volume() {
        let g = UniformGrid3::new([0.0; 3], [0.5, 0.25, 2.0], [6, 8, 3]).unwrap();
        let f = FieldGrid::from_fn(g.clone(), |_| 1.0);
        let v = integrate_grid(&f, |_| 1.0).unwrap();
        assert!((v - g.box_volume()).abs() < 1e-12);
    }

    #[test]
    fn normalized_gaussian_density() {
        let s = 1.3;
        let g = UniformGrid3::centered([0.0; 3], [8.0 * s; 3], [0.4; 3]).unwrap();
        let norm = (2.0 * PI * s * s).powf(-1.5);
        let f = FieldGrid::from_fn(g, |x| {
            norm * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * s * s)).exp()
        });
        let v = integrate_grid(&f, |_| 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn odd_integrand_vanishes() {
        let g = UniformGrid3::centered([0.0; 3], [6.0; 3], [0.3; 3]).unwrap();
        let f = FieldGrid::from_fn(g, |x| x[0] * (-x[0] * x[0]).exp());
        let v = integrate_grid(&f, |_| 1.0).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn non_finite_is_rejected_with_index() {
        let g = UniformGrid3::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        let mut f = FieldGrid::from_fn(g, |_| 1.0);
        f.values_mut()[5] = f64::NAN;
        assert_eq!(
            integrate_grid(&f, |_| 1.0),
            Err(Error::NonFinite { index: 5 })
        );
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // ∫ x^8 = 2/9
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((q - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_area_and_dipole_pattern() {
        let r0 = 7.5;
        let sq = SphereQuadrature::new(r0, 4, 8).unwrap();
        let area: f64 = sq.integrate(|_| 1.0);
        assert!((area / (4.0 * PI * r0 * r0) - 1.0).abs() < 1e-12);
        for n in sq.nodes() {
            assert!((super::super::vec3::norm(n.direction) - 1.0).abs() < 1e-12);
        }
        // sin²θ / R0² pattern
        let flux = sq.integrate(|n| (1.0 - n[2] * n[2]) / (r0 * r0));
        assert!((flux / (8.0 * PI / 3.0) - 1.0).abs() < 1e-10);
    }
}
