use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::grid::{FieldGrid, UniformGrid3};
use crate::{Error, Result};

/// In-place 3-D FFT over z-fastest storage.
pub struct Fft3 {
    counts: [usize; 3],
    plans: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn inverse(counts: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = [
            planner.plan_fft_inverse(counts[0]),
            planner.plan_fft_inverse(counts[1]),
            planner.plan_fft_inverse(counts[2]),
        ];
        Self { counts, plans }
    }

    pub fn forward(counts: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = [
            planner.plan_fft_forward(counts[0]),
            planner.plan_fft_forward(counts[1]),
            planner.plan_fft_forward(counts[2]),
        ];
        Self { counts, plans }
    }

    pub fn process(&self, data: &mut [Complex64]) {
        let [nx, ny, nz] = self.counts;
        assert_eq!(data.len(), nx * ny * nz);
        let slab = ny * nz;
        // z then y within each x-slab
        data.par_chunks_mut(slab).for_each(|s| {
            let mut scratch =
                vec![Complex64::new(0.0, 0.0); self.plans[2].get_inplace_scratch_len()];
            for line in s.chunks_mut(nz) {
                self.plans[2].process_with_scratch(line, &mut scratch);
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); ny];
            let mut scratch =
                vec![Complex64::new(0.0, 0.0); self.plans[1].get_inplace_scratch_len()];
            for k in 0..nz {
                for j in 0..ny {
                    buf[j] = s[j * nz + k];
                }
                self.plans[1].process_with_scratch(&mut buf, &mut scratch);
                for j in 0..ny {
                    s[j * nz + k] = buf[j];
                }
            }
        });
        // x lines: gather, transform, scatter
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.plans[0].get_inplace_scratch_len()];
        for jk in 0..slab {
            for i in 0..nx {
                buf[i] = data[i * slab + jk];
            }
            self.plans[0].process_with_scratch(&mut buf, &mut scratch);
            for i in 0..nx {
                data[i * slab + jk] = buf[i];
            }
        }
    }
}

/// Rejects a momentum/position grid pair unless counts match and
/// `Δx·Δk = 2π/N` on every axis.
pub fn check_conjugate(kgrid: &UniformGrid3, xgrid: &UniformGrid3) -> Result<()> {
    if kgrid.counts() != xgrid.counts() {
        return Err(Error::NonConjugate(format!(
            "counts differ: k {:?} vs x {:?}",
            kgrid.counts(),
            xgrid.counts()
        )));
    }
    let conj = xgrid.conjugate();
    for a in 0..3 {
        let n = xgrid.counts()[a] as f64;
        let prod = kgrid.spacing()[a] * xgrid.spacing()[a];
        let want = 2.0 * PI / n;
        if (prod - want).abs() > 1e-10 * want {
            return Err(Error::NonConjugate(format!(
                "axis {a}: Δx·Δk = {prod}, expected 2π/N = {want}"
            )));
        }
        if (kgrid.origin()[a] - conj.origin()[a]).abs() > 1e-10 * kgrid.spacing()[a] {
            return Err(Error::NonConjugate(format!(
                "axis {a}: k origin {} is not -(N/2)Δk",
                kgrid.origin()[a]
            )));
        }
    }
    Ok(())
}

/// Reusable k → x synthesis for a fixed pair of conjugate grids.
///
/// With amplitudes `a(k)` the result is
/// `ψ(x) = V^{-1/2} Σ_k a(k) e^{i k·x}`, `V` the box volume, so that
/// `Σ_x |ψ|² ΔV = Σ_k |a|²` (discrete Parseval). The target grid may have
/// any origin; only counts and spacing must be conjugate.
pub struct Synthesizer {
    kgrid: UniformGrid3,
    xgrid: UniformGrid3,
    fft: Fft3,
    /// `e^{i k·x0}` per k-node.
    origin_phase: Vec<Complex64>,
    /// `e^{-2πi s l / N}` per axis and node index.
    shift: [Vec<Complex64>; 3],
    norm: f64,
}

impl Synthesizer {
    pub fn new(kgrid: &UniformGrid3, xgrid: &UniformGrid3) -> Result<Self> {
        check_conjugate(kgrid, xgrid)?;
        let counts = xgrid.counts();
        let x0 = xgrid.origin();
        let origin_phase = (0..kgrid.len())
            .into_par_iter()
            .map(|i| {
                let k = kgrid.node(i);
                Complex64::from_polar(1.0, k[0] * x0[0] + k[1] * x0[1] + k[2] * x0[2])
            })
            .collect();
        let shift = [0, 1, 2].map(|a| {
            let n = counts[a];
            let s = (n / 2) as f64;
            (0..n)
                .map(|l| Complex64::from_polar(1.0, -2.0 * PI * s * l as f64 / n as f64))
                .collect::<Vec<_>>()
        });
        Ok(Self {
            kgrid: kgrid.clone(),
            xgrid: xgrid.clone(),
            fft: Fft3::inverse(counts),
            origin_phase,
            shift,
            norm: 1.0 / xgrid.box_volume().sqrt(),
        })
    }

    pub fn kgrid(&self) -> &UniformGrid3 {
        &self.kgrid
    }

    pub fn xgrid(&self) -> &UniformGrid3 {
        &self.xgrid
    }

    /// Synthesizes position-space samples from k-space amplitudes.
    pub fn synthesize(&self, amplitudes: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(amplitudes.len(), self.kgrid.len());
        let mut buf: Vec<Complex64> = amplitudes
            .par_iter()
            .zip(self.origin_phase.par_iter())
            .map(|(a, p)| a * p)
            .collect();
        self.fft.process(&mut buf);
        let [_, ny, nz] = self.xgrid.counts();
        let norm = self.norm;
        buf.par_chunks_mut(ny * nz).enumerate().for_each(|(i, s)| {
            let si = self.shift[0][i] * norm;
            for j in 0..ny {
                let sij = si * self.shift[1][j];
                for k in 0..nz {
                    s[j * nz + k] *= sij * self.shift[2][k];
                }
            }
        });
        buf
    }
}

/// Inverse DFT of phase-multiplied k-space amplitudes onto a conjugate
/// position grid. `phases` may be empty (unit phases).
pub fn dft_synthesize(
    momentum: &FieldGrid<Complex64>,
    phases: &[Complex64],
    target: &UniformGrid3,
) -> Result<FieldGrid<Complex64>> {
    if !phases.is_empty() && phases.len() != momentum.values().len() {
        return Err(Error::InvalidParameter(format!(
            "{} phases for {} momentum nodes",
            phases.len(),
            momentum.values().len()
        )));
    }
    momentum.ensure_finite()?;
    let synth = Synthesizer::new(momentum.grid(), target)?;
    let amps: Vec<Complex64> = if phases.is_empty() {
        momentum.values().to_vec()
    } else {
        momentum
            .values()
            .iter()
            .zip(phases)
            .map(|(a, p)| a * p)
            .collect()
    };
    FieldGrid::new(target.clone(), synth.synthesize(&amps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridlab::integrate_grid;

    fn grids() -> (UniformGrid3, UniformGrid3) {
        let x = UniformGrid3::centered([0.0; 3], [20.0, 18.0, 18.0], [0.625, 0.75, 0.75]).unwrap();
        (x.conjugate(), x)
    }

    #[test]
    fn single_mode_is_plane_wave() {
        let (kg, xg) = grids();
        let mut amps = FieldGrid::<Complex64>::zeros(kg.clone());
        let node = kg.index(
            kg.counts()[0] / 2 + 3,
            kg.counts()[1] / 2 - 2,
            kg.counts()[2] / 2 + 1,
        );
        let kvec = kg.node(node);
        amps.values_mut()[node] = Complex64::new(1.0, 0.0);
        let psi = dft_synthesize(&amps, &[], &xg).unwrap();
        let v = xg.box_volume().sqrt();
        for (i, p) in psi.values().iter().enumerate().step_by(37) {
            let x = xg.node(i);
            let want =
                Complex64::from_polar(1.0 / v, kvec[0] * x[0] + kvec[1] * x[1] + kvec[2] * x[2]);
            assert!((p - want).norm() < 1e-12, "node {i}: {p} vs {want}");
        }
    }

    #[test]
    fn gaussian_pair_and_parseval() {
        let (kg, xg) = grids();
        let sk = 0.3;
        let dk3 = kg.cell_volume();
        // φ(k) = (2πσ²)^{-3/4} exp(-k²/4σ²), sampled with sqrt(Δk³)
        let amps = FieldGrid::from_fn(kg.clone(), |k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            Complex64::new(
                (2.0 * PI * sk * sk).powf(-0.75) * (-k2 / (4.0 * sk * sk)).exp() * dk3.sqrt(),
                0.0,
            )
        });
        let psi = dft_synthesize(&amps, &[], &xg).unwrap();
        let k_norm: f64 = amps.values().iter().map(|a| a.norm_sqr()).sum();
        let x_norm = integrate_grid(&psi.map(|p| p.norm_sqr()), |_| 1.0).unwrap();
        assert!((x_norm / k_norm - 1.0).abs() < 1e-10);
        // position width 1/(2σ_k) in density
        let sx = 1.0 / (2.0 * sk);
        for (i, p) in psi.values().iter().enumerate().step_by(53) {
            let x = xg.node(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let want = (2.0 * PI * sx * sx).powf(-0.75) * (-r2 / (4.0 * sx * sx)).exp();
            assert!((p.re - want).abs() < 1e-9 && p.im.abs() < 1e-9);
        }
    }

    #[test]
    fn free_evolution_matches_closed_form() {
        // [DERIVED] 1-D closed form per axis, m = ħ = 1:
        // ψ(x,t) = (2σ²/π)^{1/4} D^{-1/2} exp((i k0 x - σ²x² - i k0² t/2)/D), D = 1 + 2iσ²t
        let (kg, xg) = grids();
        let (sk, k0, t) = (0.3, [0.4, -0.2, 0.0], 0.6);
        let dk3 = kg.cell_volume();
        let amps = FieldGrid::from_fn(kg.clone(), |k| {
            let mut e = 0.0;
            for a in 0..3 {
                e -= (k[a] - k0[a]).powi(2) / (4.0 * sk * sk);
            }
            Complex64::new((2.0 * PI * sk * sk).powf(-0.75) * e.exp() * dk3.sqrt(), 0.0)
        });
        let phases: Vec<Complex64> = (0..kg.len())
            .map(|i| {
                let k = kg.node(i);
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                Complex64::from_polar(1.0, -0.5 * k2 * t)
            })
            .collect();
        let psi = dft_synthesize(&amps, &phases, &xg).unwrap();
        let i = Complex64::i();
        let oracle = |x: [f64; 3]| {
            let mut v = Complex64::new(1.0, 0.0);
            for a in 0..3 {
                let d = 1.0 + 2.0 * i * sk * sk * t;
                let pre = (2.0 * sk * sk / PI).powf(0.25) / d.sqrt();
                let e =
                    (i * k0[a] * x[a] - sk * sk * x[a] * x[a] - i * k0[a] * k0[a] * t / 2.0) / d;
                v *= pre * e.exp();
            }
            v
        };
        let peak = psi.values().iter().map(|p| p.norm()).fold(0.0, f64::max);
        for (n, p) in psi.values().iter().enumerate().step_by(29) {
            let want = oracle(xg.node(n));
            assert!((p - want).norm() < 1e-8 * peak, "{p} vs {want}");
        }
    }

    #[test]
    fn non_conjugate_rejected() {
        let (_, xg) = grids();
        let bad = UniformGrid3::new([0.0; 3], [0.1; 3], xg.counts()).unwrap();
        let amps = FieldGrid::<Complex64>::zeros(bad);
        assert!(matches!(
            dft_synthesize(&amps, &[], &xg),
            Err(Error::NonConjugate(_))
        ));
    }
}
