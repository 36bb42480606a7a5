//! Brute-force retarded fields from a stored current history.
//!
//! Every grid node is evaluated at its own retarded time `t − |x − x'|/c`
//! (no expansion in `x'`), so the results are independent of the multipole
//! engine.

mod container;
mod history;

use serde::{Deserialize, Serialize};

pub use container::{
    decode_history, encode_history, encode_history_be, read_history, to_bytes, HEADER_LEN, MAGIC,
    VERSION,
};
pub use history::{CurrentHistory, Interpolation};

use crate::gridlab::vec3::{add, cross, dot, norm, scale, sub};
use crate::gridlab::{tree_reduce, SphereQuadrature, Vec3};
use crate::multipole::radiated_power;
use crate::{Error, Result};

/// Retarded fields at one observation event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetardedFields {
    pub phi: f64,
    pub a: Vec3,
    pub e: Vec3,
    pub b: Vec3,
}

fn distance_range(history: &CurrentHistory, x_obs: Vec3) -> (f64, f64) {
    let g = history.grid();
    tree_reduce(
        g.len(),
        |r| {
            r.map(|i| norm(sub(x_obs, g.node(i))))
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                })
        },
        |a, b| (a.0.min(b.0), a.1.max(b.1)),
    )
    .unwrap_or((0.0, 0.0))
}

/// All retarded quantities at `(x_obs, t_obs)`:
///
/// ```text
/// Φ = ∫ ρ_r / R,   A = (1/c) ∫ J_r / R
/// E = ∫ ρ_r n̂/R² + ρ̇_r n̂/(cR) − J̇_r/(c²R)
/// B = (1/c) ∫ n̂ × [−J_r/R² − J̇_r/(cR)]
/// ```
///
/// with `n̂ = (x_obs − x')/R` exact per node and time derivatives taken
/// from the interpolant.
pub fn retarded_fields(
    history: &CurrentHistory,
    x_obs: Vec3,
    t_obs: f64,
    c: f64,
) -> Result<RetardedFields> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "c must be positive, got {c}"
        )));
    }
    let (r_min, r_max) = distance_range(history, x_obs);
    if !(r_min > 0.0) {
        return Err(Error::InvalidParameter(
            "observation point coincides with a grid node".into(),
        ));
    }
    history.check_window(t_obs - r_max / c, t_obs - r_min / c)?;
    let g = history.grid();
    let acc = tree_reduce(
        g.len(),
        |range| {
            let mut s = [0.0; 10];
            for i in range {
                let d = sub(x_obs, g.node(i));
                let r = norm(d);
                let n = scale(d, 1.0 / r);
                let st = history.stencil(t_obs - r / c);
                let (rho, drho, j, dj) = history.sample(i, &st);
                s[0] += rho / r;
                for a in 0..3 {
                    s[1 + a] += j[a] / r;
                    s[4 + a] += rho * n[a] / (r * r) + drho * n[a] / (c * r) - dj[a] / (c * c * r);
                }
                let inner = add(scale(j, -1.0 / (r * r)), scale(dj, -1.0 / (c * r)));
                let b = cross(n, inner);
                for a in 0..3 {
                    s[7 + a] += b[a];
                }
            }
            s
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        },
    )
    .unwrap_or([0.0; 10]);
    let dv = g.cell_volume();
    Ok(RetardedFields {
        phi: acc[0] * dv,
        a: [acc[1], acc[2], acc[3]].map(|v| v * dv / c),
        e: [acc[4], acc[5], acc[6]].map(|v| v * dv),
        b: [acc[7], acc[8], acc[9]].map(|v| v * dv / c),
    })
}

/// `(Φ, A)` at `(x_obs, t_obs)`.
pub fn retarded_potential(
    history: &CurrentHistory,
    x_obs: Vec3,
    t_obs: f64,
    c: f64,
) -> Result<(f64, Vec3)> {
    let f = retarded_fields(history, x_obs, t_obs, c)?;
    Ok((f.phi, f.a))
}

/// Exact retarded `B`, both the `J/R²` and `J̇/R` terms kept.
pub fn exact_farfield_b(history: &CurrentHistory, x_obs: Vec3, t_obs: f64, c: f64) -> Result<Vec3> {
    Ok(retarded_fields(history, x_obs, t_obs, c)?.b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxRow {
    pub r0: f64,
    pub t_obs: f64,
    /// `(c/4π) ∮ (E × B)·n̂ dA` over the sphere of radius `r0`.
    pub power: f64,
    /// RMS of `|B|` over the sphere nodes.
    pub b_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxScan {
    pub t_emit: f64,
    pub rows: Vec<FluxRow>,
    /// `p` in `|B| ∝ R^{-p}` from a log-log least-squares fit; `None` when
    /// any `|B|` vanishes or fewer than two radii are given.
    pub b_exponent: Option<f64>,
    /// Same fit applied to `|P|`.
    pub power_exponent: Option<f64>,
}

/// Least-squares `p` in `y ∝ x^{-p}`.
pub fn decay_exponent(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Exact flux through spheres centred on the grid centre. Each radius is
/// observed at `t_obs = t_emit + R0/c`, so every sphere sees the source
/// around the same emission time.
pub fn flux_scan(
    history: &CurrentHistory,
    radii: &[f64],
    t_emit: f64,
    n_theta: usize,
    n_phi: usize,
    c: f64,
) -> Result<FluxScan> {
    let center = history.grid().center();
    let mut rows = Vec::with_capacity(radii.len());
    for &r0 in radii {
        let sphere = SphereQuadrature::new(r0, n_theta, n_phi)?;
        let t_obs = t_emit + r0 / c;
        let fields = sphere
            .nodes()
            .iter()
            .map(|n| {
                let f = retarded_fields(history, add(center, scale(n.direction, r0)), t_obs, c)?;
                Ok((f.e, f.b))
            })
            .collect::<Result<Vec<_>>>()?;
        let power = radiated_power(&sphere, &fields, c);
        let b_rms =
            (fields.iter().map(|(_, b)| dot(*b, *b)).sum::<f64>() / fields.len() as f64).sqrt();
        rows.push(FluxRow {
            r0,
            t_obs,
            power,
            b_rms,
        });
    }
    let r: Vec<f64> = rows.iter().map(|v| v.r0).collect();
    let b: Vec<f64> = rows.iter().map(|v| v.b_rms).collect();
    let p: Vec<f64> = rows.iter().map(|v| v.power.abs()).collect();
    Ok(FluxScan {
        t_emit,
        b_exponent: decay_exponent(&r, &b),
        power_exponent: decay_exponent(&r, &p),
        rows,
    })
}
