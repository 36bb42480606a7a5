//! Free-streaming Newtonian ensemble: a finite Gaussian mixture in phase
//! space, each member drifting at constant velocity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridlab::{FieldGrid, UniformGrid3, Vec3};
use crate::source::{CurrentSource, SourceFields};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMember {
    pub weight: f64,
    pub x0: Vec3,
    pub v: Vec3,
    pub sigma_x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonianEnsemble {
    members: Vec<EnsembleMember>,
    charge: f64,
    c: f64,
}

impl NewtonianEnsemble {
    pub fn new(members: Vec<EnsembleMember>, charge: f64, c: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one member".into(),
            ));
        }
        if !(c > 0.0 && c.is_finite()) || !charge.is_finite() {
            return Err(Error::InvalidParameter(
                "ensemble needs finite charge and positive c".into(),
            ));
        }
        for (i, m) in members.iter().enumerate() {
            let speed = (m.v[0] * m.v[0] + m.v[1] * m.v[1] + m.v[2] * m.v[2]).sqrt();
            if !(speed < c) {
                return Err(Error::InvalidParameter(format!(
                    "member {i}: |v| = {speed} is not below c"
                )));
            }
            if !(m.sigma_x >= 0.0 && m.sigma_x.is_finite()) || !(m.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "member {i}: needs weight > 0 and sigma_x >= 0"
                )));
            }
            if m.x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "member {i}: x0 must be finite"
                )));
            }
        }
        let total: f64 = members.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "ensemble weights sum to {total}, not 1"
            )));
        }
        Ok(Self { members, charge, c })
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    /// Same ensemble with every smearing width halved.
    pub fn halved_width(&self) -> Self {
        let mut e = self.clone();
        for m in &mut e.members {
            m.sigma_x *= 0.5;
        }
        e
    }

    fn suggested_half_extent(&self, t: f64, center: Vec3) -> Vec3 {
        let mut h = [0.0f64; 3];
        for m in &self.members {
            for a in 0..3 {
                h[a] = h[a].max((m.x0[a] + m.v[a] * t - center[a]).abs() + 8.0 * m.sigma_x);
            }
        }
        h
    }

    /// `ρ = q Σ w g_σ(x - x0 - vt)`, `J = q Σ w v g_σ(x - x0 - vt)`.
    pub fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
        if self.members.iter().any(|m| m.sigma_x == 0.0) {
            return Err(Error::InvalidParameter(
                "point members (sigma_x = 0) cannot be sampled on a grid".into(),
            ));
        }
        let q = self.charge;
        let eval = |x: Vec3| -> (f64, Vec3) {
            let mut rho = 0.0;
            let mut j = [0.0; 3];
            for m in &self.members {
                let s2 = m.sigma_x * m.sigma_x;
                let mut r2 = 0.0;
                for a in 0..3 {
                    let d = x[a] - m.x0[a] - m.v[a] * t;
                    r2 += d * d;
                }
                let g = m.weight
                    * q
                    * (2.0 * std::f64::consts::PI * s2).powf(-1.5)
                    * (-r2 / (2.0 * s2)).exp();
                rho += g;
                for a in 0..3 {
                    j[a] += g * m.v[a];
                }
            }
            (rho, j)
        };
        let both: Vec<(f64, Vec3)> = (0..grid.len())
            .into_par_iter()
            .map(|i| eval(grid.node(i)))
            .collect();
        let rho = FieldGrid::new(grid.clone(), both.iter().map(|v| v.0).collect())?;
        let current = FieldGrid::new(grid.clone(), both.into_iter().map(|v| v.1).collect())?;
        let fields = SourceFields { rho, current };
        if q != 0.0 {
            let outside = 1.0 - fields.charge()? / q;
            if outside > 1e-6 {
                return Err(Error::GridEscape {
                    outside,
                    suggested_half_extent: self.suggested_half_extent(t, grid.center()),
                });
            }
        }
        Ok(fields)
    }

    /// Closed-form `I_m(t) = q Σ w v E[(n̂·X)^{m-1}]`, `X ~ N(x0 + vt, σ²)`.
    pub fn closed_form_moment(&self, n: Vec3, m: usize, t: f64) -> Vec3 {
        let mut out = [0.0; 3];
        for mem in &self.members {
            let mu: f64 = (0..3).map(|a| n[a] * (mem.x0[a] + mem.v[a] * t)).sum();
            let e = normal_moment(mu, mem.sigma_x, m.saturating_sub(1));
            for a in 0..3 {
                out[a] += self.charge * mem.weight * mem.v[a] * e;
            }
        }
        out
    }
}

/// `E[Y^k]` for `Y ~ N(μ, s²)`.
pub fn normal_moment(mu: f64, s: f64, k: usize) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 1..=k {
        let next = mu * cur + (j as f64 - 1.0) * s * s * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl CurrentSource for NewtonianEnsemble {
    fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
        NewtonianEnsemble::fields(self, grid, t)
    }

    fn charge(&self) -> f64 {
        self.charge
    }

    fn c(&self) -> f64 {
        self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(x0: Vec3, v: Vec3) -> EnsembleMember {
        EnsembleMember {
            weight: 1.0,
            x0,
            v,
            sigma_x: 1.5,
        }
    }

    #[test]
    fn normal_moments() {
        assert_eq!(normal_moment(2.0, 0.5, 0), 1.0);
        assert_eq!(normal_moment(2.0, 0.5, 1), 2.0);
        assert!((normal_moment(2.0, 0.5, 2) - 4.25).abs() < 1e-15);
        assert!((normal_moment(0.0, 2.0, 4) - 48.0).abs() < 1e-12);
    }

    #[test]
    fn static_member_has_no_current() {
        let e = NewtonianEnsemble::new(vec![member([0.0; 3], [0.0; 3])], 1.0, 1.0).unwrap();
        let g = UniformGrid3::centered([0.0; 3], [12.0; 3], [0.75; 3]).unwrap();
        let f = e.fields(&g, 3.0).unwrap();
        assert!(f.current.values().iter().all(|j| *j == [0.0; 3]));
    }

    #[test]
    fn current_integral_is_qv() {
        let v = [0.2, -0.1, 0.05];
        let e = NewtonianEnsemble::new(vec![member([1.0, 0.0, -1.0], v)], 2.0, 1.0).unwrap();
        let g = UniformGrid3::centered([0.0; 3], [16.0; 3], [0.75; 3]).unwrap();
        for t in [-10.0, 0.0, 10.0] {
            let j = e.fields(&g, t).unwrap().current_integral().unwrap();
            for a in 0..3 {
                assert!((j[a] - 2.0 * v[a]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn superluminal_member_rejected() {
        assert!(NewtonianEnsemble::new(vec![member([0.0; 3], [0.8, 0.7, 0.0])], 1.0, 1.0).is_err());
    }

    #[test]
    fn escape_reported() {
        let e = NewtonianEnsemble::new(vec![member([0.0; 3], [0.5, 0.0, 0.0])], 1.0, 1.0).unwrap();
        let g = UniformGrid3::centered([0.0; 3], [12.0; 3], [0.75; 3]).unwrap();
        assert!(matches!(e.fields(&g, 20.0), Err(Error::GridEscape { .. })));
    }
}
