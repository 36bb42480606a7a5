use serde::{Deserialize, Serialize};

use crate::gridlab::vec3::{norm, normalized};
use crate::gridlab::{integrate_grid, tree_reduce, FieldGrid, TimeSampling, UniformGrid3, Vec3};
use crate::source::{check_boundary_decay, CurrentSource};
use crate::{Error, Result};

/// `|J|` on the grid boundary must stay below this fraction of its peak.
pub const BOUNDARY_DECAY_TOLERANCE: f64 = 1e-8;

fn unit(n: Vec3) -> Result<Vec3> {
    let u =
        normalized(n).ok_or_else(|| Error::InvalidParameter("direction must be nonzero".into()))?;
    if (norm(n) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "direction {n:?} is not a unit vector"
        )));
    }
    Ok(u)
}

/// `I_m = ∫ J (n̂·x')^{m-1} d³x'` on the grid at one time.
pub fn compute_moment(current: &FieldGrid<Vec3>, n: Vec3, m: usize) -> Result<Vec3> {
    if m == 0 {
        return Err(Error::InvalidParameter("moment order starts at 1".into()));
    }
    let n = unit(n)?;
    check_boundary_decay(current, BOUNDARY_DECAY_TOLERANCE)?;
    integrate_grid(current, |x| {
        (n[0] * x[0] + n[1] * x[1] + n[2] * x[2]).powi(m as i32 - 1)
    })
}

/// Exponent triples `(a, b, c)` with `a + b + c ≤ max_degree`, grouped by
/// total degree.
pub fn monomials(max_degree: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

/// `(a+b+c)! / (a! b! c!)`.
pub fn multinomial(e: [usize; 3]) -> f64 {
    let f = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    f(e[0] + e[1] + e[2]) / (f(e[0]) * f(e[1]) * f(e[2]))
}

/// Cartesian current moments `T_abc = ∫ J x^a y^b z^c d³x` up to total
/// degree `max_order − 1`; `I_m(n̂)` for any direction follows by
/// contraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianMoments {
    pub max_order: usize,
    pub exponents: Vec<[usize; 3]>,
    pub values: Vec<Vec3>,
}

impl CartesianMoments {
    pub fn from_current(current: &FieldGrid<Vec3>, max_order: usize) -> Result<Self> {
        if !(1..=8).contains(&max_order) {
            return Err(Error::InvalidParameter(format!(
                "max_order must be in 1..=8, got {max_order}"
            )));
        }
        current.ensure_finite()?;
        let exponents = monomials(max_order - 1);
        let k = exponents.len();
        let grid = current.grid();
        let vals = current.values();
        let acc = tree_reduce(
            vals.len(),
            |r| {
                let mut acc = vec![0.0; 3 * k];
                let mut pw = [[1.0; 8]; 3];
                for i in r {
                    let x = grid.node(i);
                    for a in 0..3 {
                        for p in 1..max_order {
                            pw[a][p] = pw[a][p - 1] * x[a];
                        }
                    }
                    let j = vals[i];
                    for (e, slot) in exponents.iter().zip(acc.chunks_mut(3)) {
                        let w = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
                        slot[0] += w * j[0];
                        slot[1] += w * j[1];
                        slot[2] += w * j[2];
                    }
                }
                acc
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
        .unwrap_or_else(|| vec![0.0; 3 * k]);
        let dv = grid.cell_volume();
        let values = acc
            .chunks(3)
            .map(|c| [c[0] * dv, c[1] * dv, c[2] * dv])
            .collect();
        Ok(Self {
            max_order,
            exponents,
            values,
        })
    }

    /// `I_m(n̂) = Σ_{|α|=m-1} multinomial(α) n̂^α T_α`.
    pub fn moment(&self, n: Vec3, m: usize) -> Vec3 {
        assert!(
            m >= 1 && m <= self.max_order,
            "order {m} outside 1..={}",
            self.max_order
        );
        contract(&self.exponents, &self.values, n, m)
    }
}

pub(crate) fn contract(exponents: &[[usize; 3]], values: &[Vec3], n: Vec3, m: usize) -> Vec3 {
    let mut out = [0.0; 3];
    for (e, v) in exponents.iter().zip(values) {
        if e[0] + e[1] + e[2] != m - 1 {
            continue;
        }
        let w = multinomial(*e)
            * n[0].powi(e[0] as i32)
            * n[1].powi(e[1] as i32)
            * n[2].powi(e[2] as i32);
        for c in 0..3 {
            out[c] += w * v[c];
        }
    }
    out
}

/// Cartesian moments sampled over a time window, plus the total charge at
/// each sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentHistory {
    pub times: TimeSampling,
    pub max_order: usize,
    pub samples: Vec<CartesianMoments>,
    pub charges: Vec<f64>,
    /// Worst boundary-to-peak `|J|` ratio seen.
    pub boundary_ratio: f64,
}

impl MomentHistory {
    pub fn sample<S: CurrentSource + ?Sized>(
        source: &S,
        grid: &UniformGrid3,
        times: &TimeSampling,
        max_order: usize,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(times.len());
        let mut charges = Vec::with_capacity(times.len());
        let mut boundary_ratio: f64 = 0.0;
        for t in times.times() {
            let f = source.fields(grid, t)?;
            let ratio = crate::source::boundary_ratio(&f.current);
            if ratio > BOUNDARY_DECAY_TOLERANCE {
                return Err(Error::BoundaryDecay { ratio });
            }
            boundary_ratio = boundary_ratio.max(ratio);
            charges.push(f.charge()?);
            samples.push(CartesianMoments::from_current(&f.current, max_order)?);
        }
        Ok(Self {
            times: times.clone(),
            max_order,
            samples,
            charges,
            boundary_ratio,
        })
    }

    pub fn series(&self, n: Vec3) -> Result<MomentSeries> {
        let n = unit(n)?;
        let values = (1..=self.max_order)
            .map(|m| self.samples.iter().map(|s| s.moment(n, m)).collect())
            .collect();
        Ok(MomentSeries {
            max_order: self.max_order,
            times: self.times.clone(),
            direction: n,
            values,
        })
    }

    /// Time series of one Cartesian component `T_α`.
    pub(crate) fn tensor_series(&self, k: usize) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.values[k]).collect()
    }

    pub fn exponents(&self) -> &[[usize; 3]] {
        &self.samples[0].exponents
    }
}

/// `I_m(t)` for `m = 1..=max_order` along one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub max_order: usize,
    pub times: TimeSampling,
    pub direction: Vec3,
    /// `values[m - 1][i]` is `I_m(t_i)`.
    pub values: Vec<Vec<Vec3>>,
}

impl MomentSeries {
    pub fn order(&self, m: usize) -> &[Vec3] {
        &self.values[m - 1]
    }

    /// Peak vector norm of `I_m` over the window.
    pub fn peak(&self, m: usize) -> f64 {
        self.order(m).iter().map(|v| norm(*v)).fold(0.0, f64::max)
    }
}

/// [`MomentSeries`] computed by [`compute_moment`] at every sample, without
/// the Cartesian tensor route.
pub fn direct_series<S: CurrentSource + ?Sized>(
    source: &S,
    grid: &UniformGrid3,
    times: &TimeSampling,
    n: Vec3,
    max_order: usize,
) -> Result<MomentSeries> {
    let n = unit(n)?;
    let mut values = vec![Vec::with_capacity(times.len()); max_order];
    for t in times.times() {
        let f = source.fields(grid, t)?;
        for (m, v) in values.iter_mut().enumerate() {
            v.push(compute_moment(&f.current, n, m + 1)?);
        }
    }
    Ok(MomentSeries {
        max_order,
        times: times.clone(),
        direction: n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(3).len(), 20);
        assert_eq!(multinomial([1, 1, 1]), 6.0);
        assert_eq!(multinomial([2, 0, 1]), 3.0);
    }

    #[test]
    fn contraction_matches_direct_quadrature() {
        let g = UniformGrid3::centered([0.3, -0.2, 0.1], [6.0; 3], [0.4; 3]).unwrap();
        let j = FieldGrid::from_fn(g, |x| {
            let e = (-(x[0] * x[0] + 2.0 * x[1] * x[1] + (x[2] - 0.4).powi(2))).exp();
            [e * (1.0 + x[0]), e * x[1] * x[2], e * 0.3]
        });
        let cm = CartesianMoments::from_current(&j, 4).unwrap();
        let n = normalized([0.3, -0.7, 0.5]).unwrap();
        for m in 1..=4 {
            let a = cm.moment(n, m);
            let b = compute_moment(&j, n, m).unwrap();
            for c in 0..3 {
                assert!(
                    (a[c] - b[c]).abs() < 1e-12 * (1.0 + b[c].abs()),
                    "m={m}: {a:?} vs {b:?}"
                );
            }
        }
    }

    #[test]
    fn boundary_and_direction_rejections() {
        let g = UniformGrid3::centered([0.0; 3], [2.0; 3], [0.5; 3]).unwrap();
        let j = FieldGrid::from_fn(g, |_| [1.0, 0.0, 0.0]);
        assert!(matches!(
            compute_moment(&j, [0.0, 0.0, 1.0], 1),
            Err(Error::BoundaryDecay { .. })
        ));
        assert!(compute_moment(&j, [0.0, 0.0, 2.0], 1).is_err());
    }
}
