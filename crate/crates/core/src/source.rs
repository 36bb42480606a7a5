//! The common interface of every charge/current source and the checks that
//! only need `ρ` and `J` samples.

use crate::gridlab::{integrate_grid, tree_reduce, FieldGrid, UniformGrid3, Vec3};
use crate::{Error, Result};

/// Charge density and current density sampled on one grid at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFields {
    pub rho: FieldGrid<f64>,
    pub current: FieldGrid<Vec3>,
}

impl SourceFields {
    pub fn grid(&self) -> &UniformGrid3 {
        self.rho.grid()
    }

    pub fn charge(&self) -> Result<f64> {
        integrate_grid(&self.rho, |_| 1.0)
    }

    /// `∫ J d³x`.
    pub fn current_integral(&self) -> Result<Vec3> {
        integrate_grid(&self.current, |_| 1.0)
    }
}

/// Anything that yields `(ρ, J)` on a grid at a given time.
pub trait CurrentSource: Send + Sync {
    fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields>;

    /// Nominal total charge.
    fn charge(&self) -> f64;

    /// Speed of light in the source's units.
    fn c(&self) -> f64 {
        1.0
    }

    /// Fastest angular frequency the source's moments are expected to
    /// carry; zero when they are polynomial in time.
    fn max_frequency(&self) -> f64 {
        0.0
    }
}

/// Radius about `center` enclosing `fraction` of `∫|ρ|`.
pub fn charge_radius(rho: &FieldGrid<f64>, center: Vec3, fraction: f64) -> f64 {
    let grid = rho.grid();
    let mut pairs: Vec<(f64, f64)> = rho
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.node(i);
            let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
            ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(), v.abs())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (r, w) in &pairs {
        acc += w;
        if acc >= fraction * total {
            return *r;
        }
    }
    pairs.last().map_or(0.0, |p| p.0)
}

/// Largest `|J|` on the grid boundary over the largest `|J|` anywhere.
pub fn boundary_ratio(current: &FieldGrid<Vec3>) -> f64 {
    let grid = current.grid();
    let mut peak: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for (i, v) in current.values().iter().enumerate() {
        let m = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        peak = peak.max(m);
        if grid.on_boundary(i) {
            edge = edge.max(m);
        }
    }
    if peak == 0.0 {
        0.0
    } else {
        edge / peak
    }
}

/// Rejects currents that have not decayed below `tol × peak` at the
/// boundary.
pub fn check_boundary_decay(current: &FieldGrid<Vec3>, tol: f64) -> Result<()> {
    let ratio = boundary_ratio(current);
    if ratio > tol {
        Err(Error::BoundaryDecay { ratio })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport {
    pub t: f64,
    /// `max |∂ρ/∂t + ∇·J|` over interior nodes.
    pub max_residual: f64,
    /// `max |∂ρ/∂t|` over interior nodes.
    pub max_drho_dt: f64,
    /// `max_residual / max_drho_dt`, or zero for a static source.
    pub relative: f64,
}

/// Finite-difference continuity check. `∂ρ/∂t` uses time offsets
/// `±δ, ±2δ`; `∇·J` evaluates the source on copies of `grid` shifted by
/// `±s, ±2s` along each axis. Both are fourth-order central differences.
pub fn continuity_residual<S: CurrentSource + ?Sized>(
    source: &S,
    grid: &UniformGrid3,
    t: f64,
    time_step: f64,
    space_step: f64,
) -> Result<ContinuityReport> {
    let five = |fp: &[f64], fm: &[f64], fp2: &[f64], fm2: &[f64], h: f64| -> Vec<f64> {
        (0..fp.len())
            .map(|i| (8.0 * (fp[i] - fm[i]) - (fp2[i] - fm2[i])) / (12.0 * h))
            .collect()
    };
    let rho_at =
        |dt: f64| -> Result<Vec<f64>> { Ok(source.fields(grid, t + dt)?.rho.into_values()) };
    let drho = five(
        &rho_at(time_step)?,
        &rho_at(-time_step)?,
        &rho_at(2.0 * time_step)?,
        &rho_at(-2.0 * time_step)?,
        time_step,
    );
    let mut div = vec![0.0; grid.len()];
    for axis in 0..3 {
        let comp = |k: f64| -> Result<Vec<f64>> {
            let mut d = [0.0; 3];
            d[axis] = k * space_step;
            let f = source.fields(&grid.shifted(d), t)?;
            Ok(f.current.values().iter().map(|v| v[axis]).collect())
        };
        let d = five(
            &comp(1.0)?,
            &comp(-1.0)?,
            &comp(2.0)?,
            &comp(-2.0)?,
            space_step,
        );
        for (a, b) in div.iter_mut().zip(d) {
            *a += b;
        }
    }
    let (max_residual, max_drho_dt) = tree_reduce(
        grid.len(),
        |r| {
            let mut res: f64 = 0.0;
            let mut dr: f64 = 0.0;
            for i in r {
                if grid.on_boundary(i) {
                    continue;
                }
                res = res.max((drho[i] + div[i]).abs());
                dr = dr.max(drho[i].abs());
            }
            (res, dr)
        },
        |a, b| (a.0.max(b.0), a.1.max(b.1)),
    )
    .unwrap_or((0.0, 0.0));
    let relative = if max_drho_dt > 0.0 {
        max_residual / max_drho_dt
    } else {
        0.0
    };
    Ok(ContinuityReport {
        t,
        max_residual,
        max_drho_dt,
        relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Drifting {
        v: Vec3,
        s: f64,
    }

    impl CurrentSource for Drifting {
        fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
            let blob = |x: Vec3| {
                let d: Vec<f64> = (0..3).map(|a| x[a] - self.v[a] * t).collect();
                (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * self.s * self.s)).exp()
                    * (2.0 * std::f64::consts::PI * self.s * self.s).powf(-1.5)
            };
            let rho = FieldGrid::from_fn(grid.clone(), blob);
            let current = FieldGrid::from_fn(grid.clone(), |x| {
                let b = blob(x);
                [self.v[0] * b, self.v[1] * b, self.v[2] * b]
            });
            Ok(SourceFields { rho, current })
        }

        fn charge(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn drifting_blob_satisfies_continuity() {
        let src = Drifting {
            v: [0.3, -0.1, 0.2],
            s: 1.0,
        };
        let g = UniformGrid3::centered([0.0; 3], [8.0; 3], [0.5; 3]).unwrap();
        let rep = continuity_residual(&src, &g, 0.7, 0.01, 0.005).unwrap();
        assert!(rep.relative < 1e-6, "{rep:?}");
        let f = src.fields(&g, 0.0).unwrap();
        assert!((f.charge().unwrap() - 1.0).abs() < 1e-8);
        assert!(boundary_ratio(&f.current) < 1e-8);
        let r = charge_radius(&f.rho, [0.0; 3], 0.99);
        // 99% radius of a unit 3-D Gaussian is about 3.37σ
        assert!((r - 3.37).abs() < 0.3, "{r}");
    }
}
