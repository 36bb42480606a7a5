use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kg::{check_shell, sample_components};
use crate::gridlab::{check_conjugate, FieldGrid, Spinor, Synthesizer, UniformGrid3, Vec3};
use crate::schrodinger::{GaussianComponent, Units};
use crate::source::{CurrentSource, SourceFields};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Branch separation below which a momentum node is rejected, in units of `mc²`.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

fn pauli() -> [[[Complex64; 2]; 2]; 3] {
    [
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, -I], [I, ZERO]],
        [[ONE, ZERO], [ZERO, -ONE]],
    ]
}

/// `H(k) = cħ α·k + β mc²` in the Dirac representation.
pub fn dirac_hamiltonian(k: Vec3, units: &Units) -> Matrix4<Complex64> {
    let s = pauli();
    let mc2 = units.mass * units.c * units.c;
    let mut h = Matrix4::<Complex64>::zeros();
    for d in 0..2 {
        h[(d, d)] = Complex64::new(mc2, 0.0);
        h[(d + 2, d + 2)] = Complex64::new(-mc2, 0.0);
    }
    for (a, sa) in s.iter().enumerate() {
        let f = units.c * units.hbar * k[a];
        for r in 0..2 {
            for c in 0..2 {
                h[(r, c + 2)] += sa[r][c] * f;
                h[(r + 2, c)] += sa[r][c] * f;
            }
        }
    }
    h
}

/// Orthonormal eigenbasis at one momentum, ordered by descending energy:
/// two positive-energy spinors then two negative-energy spinors.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchBasis {
    pub energies: [f64; 4],
    pub spinors: [Spinor; 4],
}

/// Diagonalizes `H(k)` and builds a deterministic basis by projecting unit
/// vectors onto each branch (`e1, e2` on the positive branch, `e3, e4` on
/// the negative one), so that the basis reduces to the unit vectors at rest.
pub fn branch_basis(k: Vec3, units: &Units, index: usize) -> Result<BranchBasis> {
    let h = dirac_hamiltonian(k, units);
    let eig = h.symmetric_eigen();
    let mc2 = units.mass * units.c * units.c;
    let mut pos = Matrix4::<Complex64>::zeros();
    let mut neg = Matrix4::<Complex64>::zeros();
    let (mut e_pos, mut e_neg) = (Vec::new(), Vec::new());
    for j in 0..4 {
        let l = eig.eigenvalues[j];
        let v = eig.eigenvectors.column(j);
        let p = v * v.adjoint();
        if l > 0.0 {
            pos += p;
            e_pos.push(l);
        } else {
            neg += p;
            e_neg.push(l);
        }
    }
    let lowest_pos = e_pos.iter().cloned().fold(f64::INFINITY, f64::min);
    let highest_neg = e_neg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let separation = lowest_pos - highest_neg;
    if e_pos.len() != 2 || !(separation >= DEGENERACY_TOLERANCE * mc2) {
        return Err(Error::DegenerateBranches {
            index,
            separation: separation / mc2,
        });
    }
    let ep = e_pos.iter().sum::<f64>() / 2.0;
    let en = e_neg.iter().sum::<f64>() / 2.0;
    let pick = |proj: &Matrix4<Complex64>, order: [usize; 4]| -> Vec<Vector4<Complex64>> {
        let mut out: Vec<Vector4<Complex64>> = Vec::new();
        for &u in &order {
            if out.len() == 2 {
                break;
            }
            let mut v = proj.column(u).into_owned();
            for b in &out {
                v -= b * b.dotc(&v);
            }
            let n = v.norm();
            if n > 1e-6 {
                out.push(v / Complex64::new(n, 0.0));
            }
        }
        out
    };
    let p = pick(&pos, [0, 1, 2, 3]);
    let n = pick(&neg, [2, 3, 0, 1]);
    let to = |v: &Vector4<Complex64>| -> Spinor { [v[0], v[1], v[2], v[3]] };
    Ok(BranchBasis {
        energies: [ep, ep, en, en],
        spinors: [to(&p[0]), to(&p[1]), to(&n[0]), to(&n[1])],
    })
}

/// One Gaussian envelope carrying fixed coefficients on the four branch
/// spinors (positive up, positive down, negative up, negative down).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracComponent {
    pub envelope: GaussianComponent,
    pub spin: [Complex64; 4],
}

/// Dirac state as branch coefficients `c_b(k)` on a momentum grid:
/// `Ψ(x,t) = V^{-1/2} Σ_k Σ_b c_b(k) e^{-iE_b t/ħ} u_b(k) e^{ik·x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracState {
    kgrid: UniformGrid3,
    units: Units,
    bases: Vec<BranchBasis>,
    coefficients: Vec<[Complex64; 4]>,
    components: Option<Vec<DiracComponent>>,
}

impl DiracState {
    /// Normalizes `Σ |c|² = 1`.
    pub fn new(
        kgrid: UniformGrid3,
        coefficients: Vec<[Complex64; 4]>,
        units: Units,
    ) -> Result<Self> {
        units.validate()?;
        if coefficients.len() != kgrid.len() {
            return Err(Error::InvalidParameter(
                "coefficients do not match the momentum grid".into(),
            ));
        }
        let bases = (0..kgrid.len())
            .into_par_iter()
            .map(|i| branch_basis(kgrid.node(i), &units, i))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = coefficients
            .iter()
            .flat_map(|c| c.iter())
            .map(|c| c.norm_sqr())
            .sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter(
                "Dirac state has zero or non-finite norm".into(),
            ));
        }
        let f = 1.0 / total.sqrt();
        let coefficients = coefficients.into_iter().map(|c| c.map(|v| v * f)).collect();
        Ok(Self {
            kgrid,
            units,
            bases,
            coefficients,
            components: None,
        })
    }

    pub fn from_components(
        components: Vec<DiracComponent>,
        units: Units,
        xgrid: &UniformGrid3,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter(
                "Dirac state needs at least one component".into(),
            ));
        }
        let kgrid = xgrid.conjugate();
        let mut coeffs = vec![[ZERO; 4]; kgrid.len()];
        for c in &components {
            let env = sample_components(std::slice::from_ref(&c.envelope), &kgrid);
            for (dst, e) in coeffs.iter_mut().zip(env) {
                for b in 0..4 {
                    dst[b] += e * c.spin[b];
                }
            }
        }
        let mut s = Self::new(kgrid, coeffs, units)?;
        s.components = Some(components);
        Ok(s)
    }

    pub fn kgrid(&self) -> &UniformGrid3 {
        &self.kgrid
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn basis(&self, i: usize) -> &BranchBasis {
        &self.bases[i]
    }

    pub fn coefficients(&self) -> &[[Complex64; 4]] {
        &self.coefficients
    }

    /// Largest angular frequency present in bilinears of the state.
    pub fn max_frequency(&self) -> f64 {
        let peak = self
            .coefficients
            .iter()
            .flat_map(|c| c.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        let mut e_max: f64 = 0.0;
        let mut mixed = (false, false);
        let mut e_min = f64::INFINITY;
        for (c, b) in self.coefficients.iter().zip(&self.bases) {
            for j in 0..4 {
                if c[j].norm() > 1e-12 * peak {
                    e_max = e_max.max(b.energies[j].abs());
                    e_min = e_min.min(b.energies[j].abs());
                    if j < 2 {
                        mixed.0 = true;
                    } else {
                        mixed.1 = true;
                    }
                }
            }
        }
        let spread = if mixed.0 && mixed.1 {
            2.0 * e_max
        } else {
            e_max - e_min
        };
        spread / self.units.hbar
    }

    fn for_grid(&self, grid: &UniformGrid3) -> Result<std::borrow::Cow<'_, Self>> {
        if check_conjugate(&self.kgrid, grid).is_ok() {
            return Ok(std::borrow::Cow::Borrowed(self));
        }
        match &self.components {
            Some(c) => Ok(std::borrow::Cow::Owned(Self::from_components(
                c.clone(),
                self.units,
                grid,
            )?)),
            None => Err(Error::NonConjugate(
                "state has no Gaussian description to resample".into(),
            )),
        }
    }
}

/// Evolves the branch phases and synthesizes the four spinor components.
pub fn dirac_synthesize(
    state: &DiracState,
    t: f64,
    grid: &UniformGrid3,
) -> Result<FieldGrid<Spinor>> {
    let state = state.for_grid(grid)?;
    let synth = Synthesizer::new(&state.kgrid, grid)?;
    let hbar = state.units.hbar;
    let evolved: Vec<Spinor> = state
        .coefficients
        .par_iter()
        .zip(state.bases.par_iter())
        .map(|(c, b)| {
            let mut s = [ZERO; 4];
            for j in 0..4 {
                if c[j] == ZERO {
                    continue;
                }
                let a = c[j] * Complex64::from_polar(1.0, -b.energies[j] * t / hbar);
                for d in 0..4 {
                    s[d] += a * b.spinors[j][d];
                }
            }
            s
        })
        .collect();
    let comps: Vec<Vec<Complex64>> = (0..4)
        .map(|d| synth.synthesize(&evolved.iter().map(|s| s[d]).collect::<Vec<_>>()))
        .collect();
    let values = (0..grid.len())
        .map(|i| [comps[0][i], comps[1][i], comps[2][i], comps[3][i]])
        .collect();
    FieldGrid::new(grid.clone(), values)
}

/// `ρ = q Ψ†Ψ`, `j_a = cq Ψ†α_aΨ = cq 2 Re(φ†σ_a χ)` with `φ`, `χ` the upper
/// and lower two-spinors.
pub fn dirac_current(psi: &FieldGrid<Spinor>, units: &Units) -> Result<SourceFields> {
    let s = pauli();
    let q = units.charge;
    let cq = units.c * q;
    let both: Vec<(f64, Vec3)> = psi
        .values()
        .par_iter()
        .map(|p| {
            let rho = q * p.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let mut j = [0.0; 3];
            for a in 0..3 {
                let mut acc = ZERO;
                for r in 0..2 {
                    for c in 0..2 {
                        acc += p[r].conj() * s[a][r][c] * p[c + 2];
                    }
                }
                j[a] = cq * 2.0 * acc.re;
            }
            (rho, j)
        })
        .collect();
    let grid = psi.grid().clone();
    Ok(SourceFields {
        rho: FieldGrid::new(grid.clone(), both.iter().map(|v| v.0).collect())?,
        current: FieldGrid::new(grid, both.into_iter().map(|v| v.1).collect())?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracSource {
    pub state: DiracState,
}

impl CurrentSource for DiracSource {
    fn fields(&self, grid: &UniformGrid3, t: f64) -> Result<SourceFields> {
        let f = dirac_current(&dirac_synthesize(&self.state, t, grid)?, &self.state.units)?;
        check_shell(&f.rho)?;
        Ok(f)
    }

    fn charge(&self) -> f64 {
        self.state.units.charge
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

    #[test]
    fn eigenvalues_match_dispersion() {
        let u = Units {
            mass: 1.3,
            charge: 1.0,
            hbar: 0.7,
            c: 2.0,
        };
        for k in [[0.0; 3], [0.3, -0.2, 0.9], [5.0, 0.0, 0.0]] {
            let b = branch_basis(k, &u, 0).unwrap();
            let k2: f64 = k.iter().map(|v| v * v).sum();
            let e = ((u.c * u.hbar).powi(2) * k2 + (u.mass * u.c * u.c).powi(2)).sqrt();
            for (j, want) in [e, e, -e, -e].iter().enumerate() {
                assert!((b.energies[j] - want).abs() < 1e-12 * e);
            }
            let h = dirac_hamiltonian(k, &u);
            for j in 0..4 {
                let v = Vector4::from_column_slice(&b.spinors[j]);
                let r = h * v - v * Complex64::new(b.energies[j], 0.0);
                assert!(r.norm() < 1e-12 * e);
                for l in 0..4 {
                    let w = Vector4::from_column_slice(&b.spinors[l]);
                    let d = w.dotc(&v).norm();
                    assert!((d - if j == l { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rest_basis_is_unit_vectors() {
        let b = branch_basis([0.0; 3], &Units::default(), 0).unwrap();
        for j in 0..4 {
            for d in 0..4 {
                let want = if j == d { 1.0 } else { 0.0 };
                assert!((b.spinors[j][d] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn upper_spinor_has_no_current_and_lorentz_bound_holds() {
        let g = UniformGrid3::centered([0.0; 3], [4.0; 3], [0.5; 3]).unwrap();
        let psi = FieldGrid::from_fn(g.clone(), |x| {
            let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp();
            [
                Complex64::new(e, 0.0),
                Complex64::new(0.0, 0.5 * e),
                ZERO,
                ZERO,
            ]
        });
        let f = dirac_current(&psi, &Units::default()).unwrap();
        assert!(f.current.values().iter().all(|j| *j == [0.0; 3]));
        let psi = FieldGrid::from_fn(g, |x| {
            [
                Complex64::new(x[0].sin(), 0.2),
                Complex64::new(0.1, x[1]),
                Complex64::new(x[2], -0.3),
                Complex64::new(0.5, x[0] * x[1]),
            ]
        });
        let f = dirac_current(&psi, &Units::default()).unwrap();
        for (r, j) in f.rho.values().iter().zip(f.current.values()) {
            let n = (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]).sqrt();
            assert!(n <= r * (1.0 + 1e-12));
        }
    }

    #[test]
    fn norm_preserved_in_time() {
        let xg = UniformGrid3::centered([0.0; 3], [20.0; 3], [1.25; 3]).unwrap();
        let comp = DiracComponent {
            envelope: GaussianComponent::new(ONE, [0.2, 0.0, 0.0], [0.2; 3], [0.0; 3]),
            spin: [ONE, ZERO, Complex64::new(0.3, 0.0), ZERO],
        };
        let s = DiracState::from_components(vec![comp], Units::default(), &xg).unwrap();
        for t in [0.0, 2.0, 5.0] {
            let f = dirac_current(&dirac_synthesize(&s, t, &xg).unwrap(), s.units()).unwrap();
            let q = integrate_grid(&f.rho, |_| 1.0).unwrap();
            assert!((q - 1.0).abs() < 1e-10, "{q}");
        }
    }

    #[test]
    fn positive_branch_current_is_steady() {
        // [DERIVED] with only positive-energy coefficients, ∫j is
        // Σ_k Σ c_b* c_b' u_b†cαu_b' with equal energies, hence constant
        let xg = UniformGrid3::centered([0.0; 3], [20.0; 3], [1.25; 3]).unwrap();
        let comp = DiracComponent {
            envelope: GaussianComponent::new(ONE, [0.25, 0.0, 0.0], [0.15; 3], [0.0; 3]),
            spin: [ONE, ZERO, ZERO, ZERO],
        };
        let s = DiracState::from_components(vec![comp], Units::default(), &xg).unwrap();
        let j0 = dirac_current(&dirac_synthesize(&s, 0.0, &xg).unwrap(), s.units())
            .unwrap()
            .current_integral()
            .unwrap();
        let j1 = dirac_current(&dirac_synthesize(&s, 3.3, &xg).unwrap(), s.units())
            .unwrap()
            .current_integral()
            .unwrap();
        assert!(j0[0] > 0.1);
        for a in 0..3 {
            assert!((j0[a] - j1[a]).abs() < 1e-12);
        }
    }
}
