use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridlab::{TimeSampling, UniformGrid3, Vec3};
use crate::source::CurrentSource;
use crate::{Error, Result};

/// Interpolation order in time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

/// Lagrange stencil for one query time: value and derivative weights over
/// consecutive samples starting at `first`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub first: usize,
    pub len: usize,
    pub w: [f64; 4],
    pub dw: [f64; 4],
}

/// Dense `ρ` and `J` snapshots on a fixed grid over a uniform time window.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentHistory {
    grid: UniformGrid3,
    times: TimeSampling,
    interpolation: Interpolation,
    rho: Vec<Vec<f64>>,
    current: Vec<Vec<Vec3>>,
}

impl CurrentHistory {
    pub fn new(
        grid: UniformGrid3,
        times: TimeSampling,
        interpolation: Interpolation,
        rho: Vec<Vec<f64>>,
        current: Vec<Vec<Vec3>>,
    ) -> Result<Self> {
        if rho.len() != times.len() || current.len() != times.len() {
            return Err(Error::InvalidParameter(format!(
                "history needs {} snapshots, got {} ρ and {} J",
                times.len(),
                rho.len(),
                current.len()
            )));
        }
        let n = grid.len();
        for (i, (r, j)) in rho.iter().zip(&current).enumerate() {
            if r.len() != n || j.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "snapshot {i} does not match the grid"
                )));
            }
            if r.iter().any(|v| !v.is_finite()) || j.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(Self {
            grid,
            times,
            interpolation,
            rho,
            current,
        })
    }

    /// Samples a source at every time of the window.
    pub fn record<S: CurrentSource + ?Sized>(
        source: &S,
        grid: &UniformGrid3,
        times: &TimeSampling,
    ) -> Result<Self> {
        let mut rho = Vec::with_capacity(times.len());
        let mut current = Vec::with_capacity(times.len());
        for t in times.times() {
            let f = source.fields(grid, t)?;
            rho.push(f.rho.into_values());
            current.push(f.current.into_values());
        }
        Self::new(
            grid.clone(),
            times.clone(),
            Interpolation::Cubic,
            rho,
            current,
        )
    }

    /// History built from a closed-form `(ρ, J)(x, t)`.
    pub fn from_fn<F>(
        grid: &UniformGrid3,
        times: &TimeSampling,
        interpolation: Interpolation,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(Vec3, f64) -> (f64, Vec3) + Sync,
    {
        let mut rho = Vec::with_capacity(times.len());
        let mut current = Vec::with_capacity(times.len());
        for t in times.times() {
            let both: Vec<(f64, Vec3)> = (0..grid.len())
                .into_par_iter()
                .map(|i| f(grid.node(i), t))
                .collect();
            rho.push(both.iter().map(|v| v.0).collect());
            current.push(both.into_iter().map(|v| v.1).collect());
        }
        Self::new(grid.clone(), times.clone(), interpolation, rho, current)
    }

    pub fn grid(&self) -> &UniformGrid3 {
        &self.grid
    }

    pub fn times(&self) -> &TimeSampling {
        &self.times
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn rho(&self, i: usize) -> &[f64] {
        &self.rho[i]
    }

    pub fn current(&self, i: usize) -> &[Vec3] {
        &self.current[i]
    }

    pub fn rho_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.rho[i]
    }

    pub fn current_mut(&mut self, i: usize) -> &mut [Vec3] {
        &mut self.current[i]
    }

    /// Largest distance from the grid centre to a node.
    pub fn extent(&self) -> f64 {
        let h = self.grid.half_extent();
        let s = self.grid.spacing();
        (0..3)
            .map(|a| (h[a] - 0.5 * s[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Rejects a retarded-time range outside the stored window.
    pub(crate) fn check_window(&self, need_start: f64, need_end: f64) -> Result<()> {
        let slack = 1e-9 * self.times.dt();
        if need_start < self.times.t_start() - slack || need_end > self.times.t_end() + slack {
            return Err(Error::HistoryWindow {
                need_start,
                need_end,
                have_start: self.times.t_start(),
                have_end: self.times.t_end(),
            });
        }
        Ok(())
    }

    pub(crate) fn stencil(&self, t: f64) -> Stencil {
        let n = self.times.len();
        let dt = self.times.dt();
        let u = ((t - self.times.t_start()) / dt).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        match self.interpolation {
            Interpolation::Linear => {
                let s = u - i as f64;
                Stencil {
                    first: i,
                    len: 2,
                    w: [1.0 - s, s, 0.0, 0.0],
                    dw: [-1.0 / dt, 1.0 / dt, 0.0, 0.0],
                }
            }
            Interpolation::Cubic => {
                let first = i.saturating_sub(1).min(n - 4);
                let s = u - first as f64;
                let mut w = [0.0; 4];
                let mut dw = [0.0; 4];
                for j in 0..4 {
                    let mut num = 1.0;
                    let mut den = 1.0;
                    let mut dnum = 0.0;
                    for l in 0..4 {
                        if l == j {
                            continue;
                        }
                        den *= j as f64 - l as f64;
                        // product rule for d/ds Π (s - l)
                        dnum = dnum * (s - l as f64) + num;
                        num *= s - l as f64;
                    }
                    w[j] = num / den;
                    dw[j] = dnum / den / dt;
                }
                Stencil {
                    first,
                    len: 4,
                    w,
                    dw,
                }
            }
        }
    }

    /// `(ρ, ∂ρ/∂t, J, ∂J/∂t)` at node `i`, time `t`.
    #[inline]
    pub(crate) fn sample(&self, i: usize, st: &Stencil) -> (f64, f64, Vec3, Vec3) {
        let mut r = 0.0;
        let mut dr = 0.0;
        let mut j = [0.0; 3];
        let mut dj = [0.0; 3];
        for s in 0..st.len {
            let (w, dw) = (st.w[s], st.dw[s]);
            let rv = self.rho[st.first + s][i];
            let jv = self.current[st.first + s][i];
            r += w * rv;
            dr += dw * rv;
            for a in 0..3 {
                j[a] += w * jv[a];
                dj[a] += dw * jv[a];
            }
        }
        (r, dr, j, dj)
    }
}
