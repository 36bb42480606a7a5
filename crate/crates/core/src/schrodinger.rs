//! Band-limited Gaussian superpositions evolved in closed form, free or under
//! a uniform force, and their probability currents.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridlab::{integrate_grid, CVec3, FieldGrid, UniformGrid3, Vec3};
use crate::source::{CurrentSource, SourceFields};
use crate::{Error, Result};

/// Fraction of the norm allowed outside the grid.
pub const ESCAPE_TOLERANCE: f64 = 1e-6;

/// One Gaussian term in momentum space:
/// `A Π_a (2πσ_a²)^{-1/4} exp(-(k_a - k0_a)²/(4σ_a²) - i k_a x0_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    #[serde(default = "unit_amplitude")]
    pub amplitude: Complex64,
    pub k_center: Vec3,
    pub sigma_k: Vec3,
    #[serde(default)]
    pub x_offset: Vec3,
}

fn unit_amplitude() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

impl GaussianComponent {
    pub fn new(amplitude: Complex64, k_center: Vec3, sigma_k: Vec3, x_offset: Vec3) -> Self {
        Self {
            amplitude,
            k_center,
            sigma_k,
            x_offset,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude.re.is_finite() && self.amplitude.im.is_finite()) {
            return Err(Error::InvalidParameter(
                "component amplitude must be finite".into(),
            ));
        }
        if self.sigma_k.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "sigma_k must be positive, got {:?}",
                self.sigma_k
            )));
        }
        if self
            .k_center
            .iter()
            .chain(&self.x_offset)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "component k_center/x_offset must be finite".into(),
            ));
        }
        Ok(())
    }

    /// `⟨self|other⟩` of the unit-amplitude envelopes.
    fn overlap(&self, other: &Self) -> Complex64 {
        let mut v = Complex64::new(1.0, 0.0);
        for a in 0..3 {
            let (si, sj) = (self.sigma_k[a], other.sigma_k[a]);
            let (ki, kj) = (self.k_center[a], other.k_center[a]);
            let alpha = 1.0 / (4.0 * si * si) + 1.0 / (4.0 * sj * sj);
            let beta = Complex64::new(
                ki / (2.0 * si * si) + kj / (2.0 * sj * sj),
                self.x_offset[a] - other.x_offset[a],
            );
            let gamma = -ki * ki / (4.0 * si * si) - kj * kj / (4.0 * sj * sj);
            let pre = (2.0 * std::f64::consts::PI * si * si).powf(-0.25)
                * (2.0 * std::f64::consts::PI * sj * sj).powf(-0.25)
                * (std::f64::consts::PI / alpha).sqrt();
            v *= pre * (beta * beta / (4.0 * alpha) + gamma).exp();
        }
        v
    }
}

/// Physical constants carried by a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Units {
    pub mass: f64,
    pub charge: f64,
    pub hbar: f64,
    pub c: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            mass: 1.0,
            charge: 1.0,
            hbar: 1.0,
            c: 1.0,
        }
    }
}

impl Units {
    pub(crate) fn validate(&self) -> Result<()> {
        for (name, v) in [("mass", self.mass), ("hbar", self.hbar), ("c", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.charge.is_finite() {
            return Err(Error::InvalidParameter("charge must be finite".into()));
        }
        Ok(())
    }
}

/// Band-limit parameters: every component must satisfy
/// `ħ(|k0| + n_σ max σ_k) < (1 - δ) m c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandLimit {
    pub delta: f64,
    pub n_sigma: f64,
}

impl Default for BandLimit {
    fn default() -> Self {
        Self {
            delta: 0.2,
            n_sigma: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandLimitReport {
    pub pass: bool,
    /// `min_c [(1-δ) m c - ħ(|k0| + n_σ max σ_k)]`.
    pub worst_margin: f64,
    /// Index of the component with the worst margin.
    pub worst_component: usize,
    pub v_max: f64,
}

pub fn check_band_limit(
    components: &[GaussianComponent],
    units: &Units,
    band: &BandLimit,
) -> BandLimitReport {
    let limit = (1.0 - band.delta) * units.mass * units.c;
    let mut worst_margin = f64::INFINITY;
    let mut worst_component = 0;
    for (i, c) in components.iter().enumerate() {
        let k = (c.k_center[0].powi(2) + c.k_center[1].powi(2) + c.k_center[2].powi(2)).sqrt();
        let s = c.sigma_k.iter().cloned().fold(0.0, f64::max);
        let margin = limit - units.hbar * (k + band.n_sigma * s);
        if margin < worst_margin {
            worst_margin = margin;
            worst_component = i;
        }
    }
    BandLimitReport {
        pass: worst_margin > 0.0,
        worst_margin,
        worst_component,
        v_max: (1.0 - band.delta) * units.c,
    }
}

/// Constant force `F` acting on the packet; zero for free motion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UniformForce(pub Vec3);

impl UniformForce {
    pub fn is_zero(&self) -> bool {
        self.0 == [0.0; 3]
    }
}

/// A normalized, band-limited superposition of Gaussian components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacketSet {
    components: Vec<GaussianComponent>,
    units: Units,
    band: BandLimit,
}

impl GaussianPacketSet {
    /// Validates, rescales amplitudes to unit norm and enforces the band
    /// limit.
    pub fn new(components: Vec<GaussianComponent>, units: Units, band: BandLimit) -> Result<Self> {
        units.validate()?;
        if !(band.delta > 0.0 && band.delta < 1.0) || !(band.n_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "band limit needs 0 < delta < 1 and n_sigma >= 0, got {band:?}"
            )));
        }
        if components.is_empty() {
            return Err(Error::InvalidParameter(
                "packet needs at least one component".into(),
            ));
        }
        for c in &components {
            c.validate()?;
        }
        let report = check_band_limit(&components, &units, &band);
        if !report.pass {
            return Err(Error::BandLimit {
                margin: report.worst_margin,
            });
        }
        let mut norm = Complex64::new(0.0, 0.0);
        for a in &components {
            for b in &components {
                norm += a.amplitude.conj() * b.amplitude * a.overlap(b);
            }
        }
        if !(norm.re > 0.0 && norm.re.is_finite()) {
            return Err(Error::InvalidParameter(
                "components cancel to a zero-norm state".into(),
            ));
        }
        let scale = 1.0 / norm.re.sqrt();
        let components = components
            .into_iter()
            .map(|mut c| {
                c.amplitude *= scale;
                c
            })
            .collect();
        Ok(Self {
            components,
            units,
            band,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn band(&self) -> &BandLimit {
        &self.band
    }

    pub fn band_limit_report(&self) -> BandLimitReport {
        check_band_limit(&self.components, &self.units, &self.band)
    }

    /// Analytic `⟨ħk⟩` at `t = 0`.
    pub fn mean_momentum(&self) -> Vec3 {
        // each pair product is a Gaussian in k with mean β/(2α) per axis
        let mut p = [Complex64::new(0.0, 0.0); 3];
        for a in &self.components {
            for b in &self.components {
                let w = a.amplitude.conj() * b.amplitude * a.overlap(b);
                for (ax, pa) in p.iter_mut().enumerate() {
                    let (si, sj) = (a.sigma_k[ax], b.sigma_k[ax]);
                    let alpha = 1.0 / (4.0 * si * si) + 1.0 / (4.0 * sj * sj);
                    let beta = Complex64::new(
                        a.k_center[ax] / (2.0 * si * si) + b.k_center[ax] / (2.0 * sj * sj),
                        a.x_offset[ax] - b.x_offset[ax],
                    );
                    *pa += w * beta / (2.0 * alpha);
                }
            }
        }
        p.map(|v| v.re * self.units.hbar)
    }

    /// Packet centre and density standard deviation per axis of every
    /// component at time `t`.
    pub fn component_extents(&self, force: &UniformForce, t: f64) -> Vec<(Vec3, Vec3)> {
        let Units { mass: m, hbar, .. } = self.units;
        self.components
            .iter()
            .map(|c| {
                let mut center = [0.0; 3];
                let mut std = [0.0; 3];
                for a in 0..3 {
                    let s = c.sigma_k[a];
                    center[a] = c.x_offset[a]
                        + hbar * c.k_center[a] * t / m
                        + force.0[a] * t * t / (2.0 * m);
                    std[a] = (1.0 + (2.0 * s * s * hbar * t / m).powi(2)).sqrt() / (2.0 * s);
                }
                (center, std)
            })
            .collect()
    }

    /// Half-extent about `center` that holds every component to 8σ.
    pub fn suggested_half_extent(&self, force: &UniformForce, t: f64, center: Vec3) -> Vec3 {
        let mut h = [0.0f64; 3];
        for (c, s) in self.component_extents(force, t) {
            for a in 0..3 {
                h[a] = h[a].max((c[a] - center[a]).abs() + 8.0 * s[a]);
            }
        }
        h
    }

    /// Closed-form `ψ` and `∇ψ` on `grid` at time `t`. Rejects the result
    /// if more than [`ESCAPE_TOLERANCE`] of the norm lies outside the grid.
    pub fn evaluate(
        &self,
        force: &UniformForce,
        t: f64,
        grid: &UniformGrid3,
    ) -> Result<(FieldGrid<Complex64>, FieldGrid<CVec3>)> {
        let (psi, grad) = self.evaluate_unchecked(force, t, grid);
        psi.ensure_finite()?;
        let norm = integrate_grid(&psi.map(|p| p.norm_sqr()), |_| 1.0)?;
        let outside = 1.0 - norm;
        if outside > ESCAPE_TOLERANCE {
            return Err(Error::GridEscape {
                outside,
                suggested_half_extent: self.suggested_half_extent(force, t, grid.center()),
            });
        }
        Ok((psi, grad))
    }

    /// [`evaluate`](Self::evaluate) without the escape check.
    pub fn evaluate_unchecked(
        &self,
        force: &UniformForce,
        t: f64,
        grid: &UniformGrid3,
    ) -> (FieldGrid<Complex64>, FieldGrid<CVec3>) {
        let Units { mass: m, hbar, .. } = self.units;
        let f = force.0;
        let i = Complex64::i();
        // per component, per axis: tabulated value and derivative
        let tables: Vec<[(Vec<Complex64>, Vec<Complex64>); 3]> = self
            .components
            .iter()
            .map(|c| {
                [0, 1, 2].map(|a| {
                    let s2 = c.sigma_k[a] * c.sigma_k[a];
                    let k0 = c.k_center[a];
                    let d = Complex64::new(1.0, 2.0 * s2 * hbar * t / m);
                    let pre = (2.0 * s2 / std::f64::consts::PI).powf(0.25) / d.sqrt();
                    let shift = f[a] * t * t / (2.0 * m);
                    let kick = f[a] * t / hbar;
                    grid.axis_coords(a)
                        .into_iter()
                        .map(|x| {
                            let u = x - shift - c.x_offset[a];
                            let e =
                                (i * k0 * u - s2 * u * u - i * k0 * k0 * hbar * t / (2.0 * m)) / d;
                            let chi = pre * e.exp();
                            let dchi = chi * (i * k0 - 2.0 * s2 * u) / d;
                            let boost = Complex64::from_polar(1.0, kick * x);
                            (boost * chi, boost * (i * kick * chi + dchi))
                        })
                        .unzip()
                })
            })
            .collect();
        let f2 = f[0] * f[0] + f[1] * f[1] + f[2] * f[2];
        let global = Complex64::from_polar(1.0, -f2 * t * t * t / (6.0 * m * hbar));
        let amps: Vec<Complex64> = self
            .components
            .iter()
            .map(|c| c.amplitude * global)
            .collect();
        let [nx, ny, nz] = grid.counts();
        let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut grad = vec![[Complex64::new(0.0, 0.0); 3]; grid.len()];
        psi.par_chunks_mut(ny * nz)
            .zip(grad.par_chunks_mut(ny * nz))
            .enumerate()
            .for_each(|(ix, (ps, gs))| {
                for (tab, amp) in tables.iter().zip(&amps) {
                    let (fx, dfx) = (tab[0].0[ix], tab[0].1[ix]);
                    for iy in 0..ny {
                        let (fy, dfy) = (tab[1].0[iy], tab[1].1[iy]);
                        let axy = amp * fx * fy;
                        let gx = amp * dfx * fy;
                        let gy = amp * fx * dfy;
                        for iz in 0..nz {
                            let (fz, dfz) = (tab[2].0[iz], tab[2].1[iz]);
                            let n = iy * nz + iz;
                            ps[n] += axy * fz;
                            gs[n][0] += gx * fz;
                            gs[n][1] += gy * fz;
                            gs[n][2] += axy * dfz;
                        }
                    }
                }
            });
        debug_assert_eq!(psi.len(), nx * ny * nz);
        (
            FieldGrid::new(grid.clone(), psi).expect("grid-sized buffer"),
            FieldGrid::new(grid.clone(), grad).expect("grid-sized buffer"),
        )
    }
}

/// `ρ = q|ψ|²`, `J = (qħ/m) Im(ψ* ∇ψ)`.
pub fn current_density(
    psi: &FieldGrid<Complex64>,
    grad: &FieldGrid<CVec3>,
    units: &Units,
) -> Result<SourceFields> {
    if psi.grid() != grad.grid() {
        return Err(Error::InvalidGrid(
            "ψ and ∇ψ are sampled on different grids".into(),
        ));
    }
    let q = units.charge;
    let k = units.charge * units.hbar / units.mass;
    let rho = psi.map(|p| q * p.norm_sqr());
    let values = psi
        .values()
        .par_iter()
        .zip(grad.values().par_iter())
        .map(|(p, g)| {
            let c = p.conj();
            [k * (c * g[0]).im, k * (c * g[1]).im, k * (c * g[2]).im]
        })
        .collect();
    Ok(SourceFields {
        rho,
        current: FieldGrid::new(psi.grid().clone(), values)?,
    })
}

/// Weighted incoherent sum of pure states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedState {
    members: Vec<(f64, GaussianPacketSet)>,
}

impl MixedState {
    pub fn new(members: Vec<(f64, GaussianPacketSet)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter(
                "mixed state needs at least one member".into(),
            ));
        }
        if members.iter().any(|(w, _)| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::InvalidParameter(
                "mixture weights must lie in (0, 1]".into(),
            ));
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { members })
    }

    pub fn pure(state: GaussianPacketSet) -> Self {
        Self {
            members: vec![(1.0, state)],
        }
    }

    pub fn members(&self) -> &[(f64, GaussianPacketSet)] {
        &self.members
    }
}

/// `Σ_i w_i (ρ_i, J_i)` of the members at time `t`.
pub fn mixed_current(
    mix: &MixedState,
    force: &UniformForce,
    t: f64,
    grid: &UniformGrid3,
) -> Result<SourceFields> {
    let mut rho = FieldGrid::<f64>::zeros(grid.clone());
    let mut current = FieldGrid::<Vec3>::zeros(grid.clone());
    for (w, state) in &mix.members {
        let (psi, grad) = state.evaluate(force, t, grid)?;
        let f = current_density(&psi, &grad, state.units())?;
        rho.values_mut()
            .par_iter_mut()
            .zip(f.rho.values().par_iter())
            .for_each(|(a, b)| *a += w * b);
        current
            .values_mut()
            .par_iter_mut()
            .zip(f.current.values().par_iter())
            .for_each(|(a, b)| {
                for c in 0..3 {
                    a[c] += w * b[c];
                }
            });
    }
    Ok(SourceFields { rho, current })
}

/// Analytic acceleration expectation: `F/m` (Ehrenfest, uniform force).
pub fn acceleration_expectation(state: &GaussianPacketSet, force: &UniformForce, _t: f64) -> Vec3 {
    let m = state.units().mass;
    force.0.map(|f| f / m)
}

/// Grid route for the acceleration: `d⟨p⟩/dt` with `⟨p⟩ = (m/q)∫J d³x`,
/// differentiated by a fourth-order central difference of step `h`.
pub fn acceleration_from_grid(
    state: &GaussianPacketSet,
    force: &UniformForce,
    t: f64,
    grid: &UniformGrid3,
    h: f64,
) -> Result<Vec3> {
    let Units {
        mass: m, charge: q, ..
    } = *state.units();
    if q == 0.0 {
        return Err(Error::InvalidParameter(
            "grid acceleration needs a nonzero charge".into(),
        ));
    }
    let p = |s: f64| -> Result<Vec3> {
        let (psi, grad) = state.evaluate(force, t + s, grid)?;
        let j = current_density(&psi, &grad, state.units())?.current_integral()?;
        Ok(j.map(|v| v * m / q))
    };
    let (p1, m1, p2, m2) = (p(h)?, p(-h)?, p(2.0 * h)?, p(-2.0 * h)?);
    let mut a = [0.0; 3];
    for c in 0..3 {
        a[c] = (8.0 * (p1[c] - m1[c]) - (p2[c] - m2[c])) / (12.0 * h) / m;
    }
    Ok(a)
}

/// A pure or mixed Schrödinger state under an optional uniform force.
#[derive(Clone, Debug, PartialEq)]
pub struct SchrodingerSource {
    pub state: MixedState,
    pub force: UniformForce,
}

impl SchrodingerSource {
    pub fn pure(state: GaussianPacketSet, force: UniformForce) -> Self {
        Self {
            state: MixedState::pure(state),
            force,
        }
    }

    pub fn mixed(state: MixedState, force: UniformForce) -> Self {
        Self { state, force }
    }

    pub fn suggested_half_extent(&self, t: f64, center: Vec3) -> Vec3 {
        let mut h = [0.0f64; 3];
        for (_, s) in self.state.members() {
            let e = s.suggested_half_extent(&self.force, t, center);
            for a in 0..3 {
                h[a] = h[a].max(e[a]);
            }
        }
        h
    }
}

impl CurrentSource for SchrodingerSource {
    fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
        mixed_current(&self.state, &self.force, t, grid)
    }

    fn charge(&self) -> f64 {
        self.state
            .members()
            .iter()
            .map(|(w, s)| w * s.units().charge)
            .sum()
    }

    fn c(&self) -> f64 {
        self.state.members()[0].1.units().c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridlab::{dft_synthesize, integrate_grid};

    fn comp(k: Vec3, s: f64, x0: Vec3) -> GaussianComponent {
        GaussianComponent::new(Complex64::new(1.0, 0.0), k, [s; 3], x0)
    }

    #[test]
    fn band_limit_rule() {
        let u = Units::default();
        let b = BandLimit::default();
        let r = check_band_limit(&[comp([0.5, 0.0, 0.0], 0.01, [0.0; 3])], &u, &b);
        assert!(r.pass);
        assert!((r.worst_margin - (0.8 - 0.56)).abs() < 1e-12);
        assert_eq!(r.v_max, 0.8);
        assert!(!check_band_limit(&[comp([0.9, 0.0, 0.0], 0.01, [0.0; 3])], &u, &b).pass);
        assert!(
            check_band_limit(
                &[comp([0.0; 3], 0.01, [0.0; 3])],
                &u,
                &BandLimit {
                    delta: 0.9,
                    n_sigma: 6.0
                }
            )
            .pass
        );
        assert!(matches!(
            GaussianPacketSet::new(vec![comp([0.9, 0.0, 0.0], 0.01, [0.0; 3])], u, b),
            Err(Error::BandLimit { .. })
        ));
    }

    #[test]
    fn normalization_of_overlapping_components() {
        let s = GaussianPacketSet::new(
            vec![
                comp([0.1, 0.0, 0.0], 0.1, [0.0; 3]),
                comp([0.15, 0.05, 0.0], 0.08, [1.0, -2.0, 0.5]),
            ],
            Units::default(),
            BandLimit::default(),
        )
        .unwrap();
        let g = UniformGrid3::centered([0.0; 3], [60.0; 3], [1.5; 3]).unwrap();
        let (psi, _) = s.evaluate(&UniformForce::default(), 3.0, &g).unwrap();
        let n = integrate_grid(&psi.map(|p| p.norm_sqr()), |_| 1.0).unwrap();
        assert!((n - 1.0).abs() < 1e-8, "{n}");
    }

    #[test]
    fn t_zero_matches_direct_synthesis() {
        let s = GaussianPacketSet::new(
            vec![comp([0.2, 0.0, -0.1], 0.08, [1.0, 0.0, 0.0])],
            Units::default(),
            BandLimit::default(),
        )
        .unwrap();
        let xg = UniformGrid3::centered([0.0; 3], [60.0; 3], [1.5; 3]).unwrap();
        let kg = xg.conjugate();
        let c = &s.components()[0];
        let dk3 = kg.cell_volume().sqrt();
        let amps = FieldGrid::from_fn(kg, |k| {
            let mut e = Complex64::new(0.0, 0.0);
            let mut pre = 1.0;
            for a in 0..3 {
                let sk = c.sigma_k[a];
                pre *= (2.0 * std::f64::consts::PI * sk * sk).powf(-0.25);
                e += Complex64::new(
                    -(k[a] - c.k_center[a]).powi(2) / (4.0 * sk * sk),
                    -k[a] * c.x_offset[a],
                );
            }
            c.amplitude * pre * e.exp() * dk3
        });
        let direct = dft_synthesize(&amps, &[], &xg).unwrap();
        let (psi, _) = s.evaluate(&UniformForce::default(), 0.0, &xg).unwrap();
        for (a, b) in direct.values().iter().zip(psi.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_and_real_current() {
        let g = UniformGrid3::centered([0.0; 3], [2.0; 3], [0.5; 3]).unwrap();
        let k = [0.3, -0.2, 0.1];
        let u = Units {
            mass: 2.0,
            charge: 1.5,
            hbar: 1.0,
            c: 1.0,
        };
        let psi = FieldGrid::from_fn(g.clone(), |x| {
            Complex64::from_polar(0.7, k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
        });
        let grad = psi.map(|p| k.map(|ka| Complex64::i() * ka * p));
        let f = current_density(&psi, &grad, &u).unwrap();
        for (r, j) in f.rho.values().iter().zip(f.current.values()) {
            for a in 0..3 {
                assert!((j[a] - u.charge * k[a] / u.mass * 0.49).abs() < 1e-14);
            }
            assert!((r - 1.5 * 0.49).abs() < 1e-14);
        }
        let real = psi.map(|p| Complex64::new(p.re, 0.0));
        let rgrad = grad.map(|g| g.map(|c| Complex64::new(c.re, 0.0)));
        let f = current_density(&real, &rgrad, &u).unwrap();
        assert!(f.current.values().iter().all(|j| *j == [0.0; 3]));
    }

    #[test]
    fn gradient_matches_finite_difference_under_force() {
        let s = GaussianPacketSet::new(
            vec![
                comp([0.1, 0.0, 0.05], 0.2, [0.0; 3]),
                comp([-0.1, 0.1, 0.0], 0.15, [2.0, 0.0, 0.0]),
            ],
            Units::default(),
            BandLimit {
                delta: 0.2,
                n_sigma: 2.0,
            },
        )
        .unwrap();
        let force = UniformForce([0.01, -0.02, 0.005]);
        let g = UniformGrid3::centered([0.0; 3], [4.0; 3], [1.0; 3]).unwrap();
        let (_, grad) = s.evaluate_unchecked(&force, 2.0, &g);
        let h = 1e-4;
        for a in 0..3 {
            let mut d = [0.0; 3];
            d[a] = h;
            let (p, _) = s.evaluate_unchecked(&force, 2.0, &g.shifted(d));
            d[a] = -h;
            let (m, _) = s.evaluate_unchecked(&force, 2.0, &g.shifted(d));
            for i in 0..g.len() {
                let fd = (p.values()[i] - m.values()[i]) / (2.0 * h);
                assert!((fd - grad.values()[i][a]).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn escape_is_reported_with_extent() {
        let s = GaussianPacketSet::new(
            vec![comp([0.3, 0.0, 0.0], 0.2, [0.0; 3])],
            Units::default(),
            BandLimit {
                delta: 0.2,
                n_sigma: 2.0,
            },
        )
        .unwrap();
        let g = UniformGrid3::centered([0.0; 3], [15.0; 3], [0.75; 3]).unwrap();
        assert!(s.evaluate(&UniformForce::default(), 0.0, &g).is_ok());
        match s.evaluate(&UniformForce::default(), 40.0, &g) {
            Err(Error::GridEscape {
                suggested_half_extent,
                ..
            }) => assert!(suggested_half_extent[0] > 12.0 + 15.0),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn ehrenfest_routes_agree() {
        let s = GaussianPacketSet::new(
            vec![comp([0.05, 0.0, 0.0], 0.1, [0.0; 3])],
            Units::default(),
            BandLimit::default(),
        )
        .unwrap();
        let force = UniformForce([0.0, 0.0, 2e-3]);
        assert_eq!(
            acceleration_expectation(&s, &UniformForce::default(), 1.0),
            [0.0; 3]
        );
        let a = acceleration_expectation(&s, &force, 1.0);
        assert_eq!(a, [0.0, 0.0, 2e-3]);
        let g = UniformGrid3::centered([0.0; 3], [45.0; 3], [1.5; 3]).unwrap();
        let ag = acceleration_from_grid(&s, &force, 1.0, &g, 0.5).unwrap();
        assert!((ag[2] / a[2] - 1.0).abs() < 1e-6, "{ag:?}");
        assert!(ag[0].abs() < 1e-6 * a[2]);
    }

    #[test]
    fn mean_momentum_matches_current_integral() {
        let s = GaussianPacketSet::new(
            vec![
                comp([0.1, 0.0, 0.05], 0.1, [0.0; 3]),
                comp([-0.05, 0.1, 0.0], 0.1, [3.0, 0.0, 0.0]),
            ],
            Units::default(),
            BandLimit::default(),
        )
        .unwrap();
        let g = UniformGrid3::centered([0.0; 3], [80.0; 3], [2.0; 3]).unwrap();
        let (psi, grad) = s.evaluate(&UniformForce::default(), 0.0, &g).unwrap();
        let j = current_density(&psi, &grad, s.units())
            .unwrap()
            .current_integral()
            .unwrap();
        let p = s.mean_momentum();
        for a in 0..3 {
            assert!((j[a] - p[a]).abs() < 1e-9, "{j:?} vs {p:?}");
        }
    }
}
