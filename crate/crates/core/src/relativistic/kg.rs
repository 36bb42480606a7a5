use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridlab::{check_conjugate, CVec3, FieldGrid, Synthesizer, UniformGrid3, Vec3};
use crate::schrodinger::{GaussianComponent, Units};
use crate::source::{CurrentSource, SourceFields};
use crate::{Error, Result};

/// Fraction of `∫|ρ|` tolerated in the two outermost node layers of a
/// periodic synthesis before the packet counts as escaped.
pub const SHELL_TOLERANCE: f64 = 1e-6;

/// Samples `Σ φ_c(k) √Δk³` of Gaussian components on a momentum grid.
pub(crate) fn sample_components(
    comps: &[GaussianComponent],
    kgrid: &UniformGrid3,
) -> Vec<Complex64> {
    let dk = kgrid.cell_volume().sqrt();
    (0..kgrid.len())
        .into_par_iter()
        .map(|i| {
            let k = kgrid.node(i);
            let mut v = Complex64::new(0.0, 0.0);
            for c in comps {
                let mut e = Complex64::new(0.0, 0.0);
                let mut pre = 1.0;
                for a in 0..3 {
                    let s = c.sigma_k[a];
                    pre *= (2.0 * std::f64::consts::PI * s * s).powf(-0.25);
                    e += Complex64::new(
                        -(k[a] - c.k_center[a]).powi(2) / (4.0 * s * s),
                        -k[a] * c.x_offset[a],
                    );
                }
                v += c.amplitude * pre * e.exp();
            }
            v * dk
        })
        .collect()
}

/// `ω(k) = c √(k² + m²c²/ħ²)`.
pub fn kg_omega(k: Vec3, units: &Units) -> f64 {
    let mc = units.mass * units.c / units.hbar;
    units.c * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + mc * mc).sqrt()
}

/// Klein-Gordon state as positive- and negative-frequency amplitudes on a
/// momentum grid:
/// `Φ(x,t) = V^{-1/2} Σ_k [a₊(k) e^{-iωt} + a₋(k) e^{+iωt}] e^{ik·x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGState {
    kgrid: UniformGrid3,
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
    units: Units,
    /// Gaussian description, kept so the state can be resampled on other grids.
    components: Option<(Vec<GaussianComponent>, Vec<GaussianComponent>)>,
}

impl KGState {
    /// Rescales the amplitudes so that `Σ (ħω/mc²)(|a₊|² + |a₋|²) = 1`.
    pub fn new(
        kgrid: UniformGrid3,
        plus: Vec<Complex64>,
        minus: Vec<Complex64>,
        units: Units,
    ) -> Result<Self> {
        units.validate()?;
        if plus.len() != kgrid.len() || minus.len() != kgrid.len() {
            return Err(Error::InvalidParameter(
                "branch amplitudes do not match the momentum grid".into(),
            ));
        }
        if plus
            .iter()
            .chain(&minus)
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "branch amplitudes must be finite".into(),
            ));
        }
        let mut s = Self {
            kgrid,
            plus,
            minus,
            units,
            components: None,
        };
        let n = s.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("KG state has zero norm".into()));
        }
        let f = 1.0 / n.sqrt();
        s.plus
            .iter_mut()
            .chain(s.minus.iter_mut())
            .for_each(|a| *a *= f);
        Ok(s)
    }

    /// Gaussian packets per branch sampled on the grid conjugate to `xgrid`.
    pub fn from_gaussians(
        plus: Vec<GaussianComponent>,
        minus: Vec<GaussianComponent>,
        units: Units,
        xgrid: &UniformGrid3,
    ) -> Result<Self> {
        if plus.is_empty() && minus.is_empty() {
            return Err(Error::InvalidParameter(
                "KG state needs at least one component".into(),
            ));
        }
        let kgrid = xgrid.conjugate();
        let a = sample_components(&plus, &kgrid);
        let b = sample_components(&minus, &kgrid);
        let mut s = Self::new(kgrid, a, b, units)?;
        s.components = Some((plus, minus));
        Ok(s)
    }

    pub fn kgrid(&self) -> &UniformGrid3 {
        &self.kgrid
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn plus(&self) -> &[Complex64] {
        &self.plus
    }

    pub fn minus(&self) -> &[Complex64] {
        &self.minus
    }

    /// `Σ (ħω/mc²)(|a₊|² + |a₋|²)`.
    pub fn norm(&self) -> f64 {
        let mc2 = self.units.mass * self.units.c * self.units.c;
        (0..self.kgrid.len())
            .map(|i| {
                let w = self.units.hbar * kg_omega(self.kgrid.node(i), &self.units) / mc2;
                w * (self.plus[i].norm_sqr() + self.minus[i].norm_sqr())
            })
            .sum()
    }

    /// Conserved charge `q Σ (ħω/mc²)(|a₊|² − |a₋|²)`.
    pub fn charge(&self) -> f64 {
        let mc2 = self.units.mass * self.units.c * self.units.c;
        self.units.charge
            * (0..self.kgrid.len())
                .map(|i| {
                    let w = self.units.hbar * kg_omega(self.kgrid.node(i), &self.units) / mc2;
                    w * (self.plus[i].norm_sqr() - self.minus[i].norm_sqr())
                })
                .sum::<f64>()
    }

    /// Largest `2ω` among nodes carrying non-negligible amplitude.
    pub fn max_frequency(&self) -> f64 {
        let peak = self
            .plus
            .iter()
            .chain(&self.minus)
            .map(|a| a.norm())
            .fold(0.0, f64::max);
        (0..self.kgrid.len())
            .filter(|&i| self.plus[i].norm().max(self.minus[i].norm()) > 1e-12 * peak)
            .map(|i| 2.0 * kg_omega(self.kgrid.node(i), &self.units))
            .fold(0.0, f64::max)
    }

    /// This state resampled for a grid with different spacing or counts.
    fn for_grid(&self, grid: &UniformGrid3) -> Result<std::borrow::Cow<'_, Self>> {
        if check_conjugate(&self.kgrid, grid).is_ok() {
            return Ok(std::borrow::Cow::Borrowed(self));
        }
        match &self.components {
            Some((p, m)) => Ok(std::borrow::Cow::Owned(Self::from_gaussians(
                p.clone(),
                m.clone(),
                self.units,
                grid,
            )?)),
            None => Err(Error::NonConjugate(
                "state has no Gaussian description to resample".into(),
            )),
        }
    }
}

/// `Φ`, `∂_tΦ` and `∇Φ` on a position grid.
pub struct KgFields {
    pub phi: FieldGrid<Complex64>,
    pub phi_t: FieldGrid<Complex64>,
    pub grad: FieldGrid<CVec3>,
}

/// Applies the branch phases `e^{∓iωt}` and synthesizes `Φ`, `∂_tΦ` (by
/// `∓iω`) and `∇Φ` (by `ik`) on `grid`.
pub fn kg_evolve_and_synthesize(state: &KGState, t: f64, grid: &UniformGrid3) -> Result<KgFields> {
    let state = state.for_grid(grid)?;
    let kg = &state.kgrid;
    let synth = Synthesizer::new(kg, grid)?;
    let n = kg.len();
    let mut phi = Vec::with_capacity(n);
    let mut phi_t = Vec::with_capacity(n);
    for i in 0..n {
        let w = kg_omega(kg.node(i), &state.units);
        let p = state.plus[i] * Complex64::from_polar(1.0, -w * t);
        let m = state.minus[i] * Complex64::from_polar(1.0, w * t);
        phi.push(p + m);
        phi_t.push(Complex64::new(0.0, -w) * p + Complex64::new(0.0, w) * m);
    }
    let grads: Vec<Vec<Complex64>> = (0..3)
        .map(|a| {
            (0..n)
                .map(|i| Complex64::new(0.0, kg.node(i)[a]) * phi[i])
                .collect()
        })
        .collect();
    let phi_x = synth.synthesize(&phi);
    let phi_tx = synth.synthesize(&phi_t);
    let g: Vec<Vec<Complex64>> = grads.iter().map(|g| synth.synthesize(g)).collect();
    let grad = (0..n).map(|i| [g[0][i], g[1][i], g[2][i]]).collect();
    Ok(KgFields {
        phi: FieldGrid::new(grid.clone(), phi_x)?,
        phi_t: FieldGrid::new(grid.clone(), phi_tx)?,
        grad: FieldGrid::new(grid.clone(), grad)?,
    })
}

/// `ρ = −(qħ/mc²) Im(Φ* ∂_tΦ)`, `J = (qħ/m) Im(Φ* ∇Φ)`.
pub fn kg_current(fields: &KgFields, units: &Units) -> Result<SourceFields> {
    let grid = fields.phi.grid();
    if fields.phi_t.grid() != grid || fields.grad.grid() != grid {
        return Err(Error::InvalidGrid(
            "KG field components on different grids".into(),
        ));
    }
    let kr = -units.charge * units.hbar / (units.mass * units.c * units.c);
    let kj = units.charge * units.hbar / units.mass;
    let rho = fields
        .phi
        .values()
        .par_iter()
        .zip(fields.phi_t.values().par_iter())
        .map(|(p, pt)| kr * (p.conj() * pt).im)
        .collect();
    let current = fields
        .phi
        .values()
        .par_iter()
        .zip(fields.grad.values().par_iter())
        .map(|(p, g)| {
            let c = p.conj();
            [kj * (c * g[0]).im, kj * (c * g[1]).im, kj * (c * g[2]).im]
        })
        .collect();
    Ok(SourceFields {
        rho: FieldGrid::new(grid.clone(), rho)?,
        current: FieldGrid::new(grid.clone(), current)?,
    })
}

/// Rejects periodic syntheses whose outer two node layers carry more than
/// [`SHELL_TOLERANCE`] of `∫|ρ|`.
pub(crate) fn check_shell(rho: &FieldGrid<f64>) -> Result<()> {
    let grid = rho.grid();
    let counts = grid.counts();
    let mut total = 0.0;
    let mut shell = 0.0;
    let mut first = [0.0; 3];
    let mut second = [0.0; 3];
    for (i, v) in rho.values().iter().enumerate() {
        let w = v.abs();
        total += w;
        let idx = grid.unflatten(i);
        let x = grid.node(i);
        for a in 0..3 {
            first[a] += w * x[a];
            second[a] += w * x[a] * x[a];
        }
        if (0..3).any(|a| idx[a] < 2 || idx[a] + 2 >= counts[a]) {
            shell += w;
        }
    }
    if total == 0.0 {
        return Ok(());
    }
    let outside = shell / total;
    if outside > SHELL_TOLERANCE {
        let c = grid.center();
        let suggested_half_extent = [0, 1, 2].map(|a| {
            let mean = first[a] / total;
            let std = (second[a] / total - mean * mean).max(0.0).sqrt();
            (mean - c[a]).abs() + 8.0 * std
        });
        return Err(Error::GridEscape {
            outside,
            suggested_half_extent,
        });
    }
    Ok(())
}

/// A [`KGState`] as a current source.
#[derive(Clone, Debug, PartialEq)]
pub struct KgSource {
    pub state: KGState,
}

impl CurrentSource for KgSource {
    fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
        let f = kg_current(
            &kg_evolve_and_synthesize(&self.state, t, grid)?,
            &self.state.units,
        )?;
        check_shell(&f.rho)?;
        Ok(f)
    }

    fn charge(&self) -> f64 {
        self.state.charge()
    }

    fn c(&self) -> f64 {
        self.state.units.c
    }

    fn max_frequency(&self) -> f64 {
        self.state.max_frequency()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridlab::integrate_grid;

    fn grid() -> UniformGrid3 {
        UniformGrid3::centered([0.0; 3], [24.0; 3], [1.5; 3]).unwrap()
    }

    fn single_node(xg: &UniformGrid3, offset: [i64; 3], plus: bool) -> (KGState, Vec3) {
        let kg = xg.conjugate();
        let c = kg.counts();
        let idx = kg.index(
            (c[0] as i64 / 2 + offset[0]) as usize,
            (c[1] as i64 / 2 + offset[1]) as usize,
            (c[2] as i64 / 2 + offset[2]) as usize,
        );
        let mut a = vec![Complex64::new(0.0, 0.0); kg.len()];
        a[idx] = Complex64::new(1.0, 0.0);
        let z = vec![Complex64::new(0.0, 0.0); kg.len()];
        let k = kg.node(idx);
        let s = if plus {
            KGState::new(kg, a, z, Units::default())
        } else {
            KGState::new(kg, z, a, Units::default())
        };
        (s.unwrap(), k)
    }

    #[test]
    fn plane_wave_frequency_and_density() {
        let xg = grid();
        let (s, k) = single_node(&xg, [2, -1, 0], true);
        let w = kg_omega(k, s.units());
        let t = 0.37;
        let f = kg_evolve_and_synthesize(&s, t, &xg).unwrap();
        let amp = f.phi.values()[0].norm();
        for (i, p) in f.phi.values().iter().enumerate().step_by(101) {
            let x = xg.node(i);
            let want = Complex64::from_polar(amp, k[0] * x[0] + k[1] * x[1] + k[2] * x[2] - w * t);
            assert!((p - want).norm() < 1e-12);
        }
        let cur = kg_current(&f, s.units()).unwrap();
        for r in cur.rho.values() {
            assert!((r - w * amp * amp).abs() < 1e-12 && *r > 0.0);
        }
    }

    #[test]
    fn rest_mode_rotates_at_rest_energy() {
        let xg = grid();
        let (s, _) = single_node(&xg, [0, 0, 0], true);
        let f0 = kg_evolve_and_synthesize(&s, 0.0, &xg).unwrap();
        let f1 = kg_evolve_and_synthesize(&s, 0.8, &xg).unwrap();
        let ratio = f1.phi.values()[17] / f0.phi.values()[17];
        assert!((ratio - Complex64::from_polar(1.0, -0.8)).norm() < 1e-12);
    }

    #[test]
    fn charge_conserved_and_real_field_has_no_current() {
        let xg = grid();
        let comp = GaussianComponent::new(
            Complex64::new(1.0, 0.0),
            [0.3, 0.0, 0.1],
            [0.2; 3],
            [0.0; 3],
        );
        let s = KGState::from_gaussians(vec![comp.clone()], vec![], Units::default(), &xg).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        for t in [0.0, 3.0, 7.0] {
            let f = kg_current(&kg_evolve_and_synthesize(&s, t, &xg).unwrap(), s.units()).unwrap();
            let q = integrate_grid(&f.rho, |_| 1.0).unwrap();
            assert!((q - 1.0).abs() < 1e-8, "{q}");
        }
        let f = KgFields {
            phi: FieldGrid::from_fn(xg.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0)),
            phi_t: FieldGrid::zeros(xg.clone()),
            grad: FieldGrid::from_fn(xg.clone(), |x| {
                [
                    Complex64::new(-2.0 * x[0] * (-x[0] * x[0]).exp(), 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                ]
            }),
        };
        let c = kg_current(&f, &Units::default()).unwrap();
        assert!(c.current.values().iter().all(|j| *j == [0.0; 3]));
    }

    #[test]
    fn branch_cross_term_oscillates_at_summed_frequency() {
        // [DERIVED] equal ± amplitudes at one k: the k-space current integral is
        // (qħk/m)(|a₊|² + |a₋|² + 2 Re(a₊ a₋* e^{-2iωt})) / V-normalized
        let xg = grid();
        let kg = xg.conjugate();
        let c = kg.counts();
        let idx = kg.index(c[0] / 2 + 2, c[1] / 2, c[2] / 2);
        let mut a = vec![Complex64::new(0.0, 0.0); kg.len()];
        a[idx] = Complex64::new(1.0, 0.0);
        let s = KGState::new(kg.clone(), a.clone(), a, Units::default()).unwrap();
        let k = kg.node(idx);
        let w = kg_omega(k, s.units());
        let amp2 = s.plus()[idx].norm_sqr();
        for t in [0.0, 0.3, 1.1] {
            let f = kg_current(&kg_evolve_and_synthesize(&s, t, &xg).unwrap(), s.units()).unwrap();
            let j = f.current_integral().unwrap();
            let want = k[0] * amp2 * (2.0 + 2.0 * (2.0 * w * t).cos());
            assert!((j[0] - want).abs() < 1e-10, "{} vs {want}", j[0]);
        }
    }
}
