use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;

use super::vec3::Vec3;
use crate::{Error, Result};

/// Default cap on the number of nodes of a single grid (2^21).
pub const DEFAULT_NODE_BUDGET: usize = 1 << 21;

pub type CVec3 = [Complex64; 3];
pub type Spinor = [Complex64; 4];

/// Uniform Cartesian grid of sample nodes.
///
/// Node `(i, j, k)` sits at `origin + (i, j, k) * spacing`; nodes are the
/// cell centres of the midpoint rule, so the covered box extends half a
/// spacing beyond the outer nodes. Flat storage is z-fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid3 {
    origin: Vec3,
    spacing: Vec3,
    counts: [usize; 3],
}

impl UniformGrid3 {
    pub fn new(origin: Vec3, spacing: Vec3, counts: [usize; 3]) -> Result<Self> {
        Self::with_budget(origin, spacing, counts, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(
        origin: Vec3,
        spacing: Vec3,
        counts: [usize; 3],
        budget: usize,
    ) -> Result<Self> {
        for a in 0..3 {
            if !(spacing[a] > 0.0 && spacing[a].is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "spacing on axis {a} must be positive and finite, got {}",
                    spacing[a]
                )));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "origin on axis {a} is not finite"
                )));
            }
            if counts[a] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} needs at least 2 nodes, got {}",
                    counts[a]
                )));
            }
        }
        let requested = counts
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if requested > budget {
            return Err(Error::BudgetExceeded { requested, budget });
        }
        Ok(Self {
            origin,
            spacing,
            counts,
        })
    }

    /// Grid symmetric about `center` with at least `half_extent` of coverage
    /// on each side (node count rounded up to an even number).
    pub fn centered(center: Vec3, half_extent: Vec3, spacing: Vec3) -> Result<Self> {
        let mut counts = [0usize; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            if !(half_extent[a] > 0.0 && spacing[a] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "half extent and spacing on axis {a} must be positive"
                )));
            }
            let raw = (2.0 * half_extent[a] / spacing[a]).ceil();
            if !(raw.is_finite() && raw < 1e9) {
                return Err(Error::InvalidGrid(format!("axis {a} node count overflows")));
            }
            let mut n = raw as usize;
            n = n.max(2);
            if n % 2 == 1 {
                n += 1;
            }
            counts[a] = n;
            origin[a] = center[a] - 0.5 * (n as f64 - 1.0) * spacing[a];
        }
        Self::new(origin, spacing, counts)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Volume of the box covered by the midpoint cells.
    pub fn box_volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.counts[2];
        let rest = idx / self.counts[2];
        [rest / self.counts[1], rest % self.counts[1], k]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.unflatten(idx);
        [self.coord(0, i), self.coord(1, j), self.coord(2, k)]
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis])
            .map(|i| self.coord(axis, i))
            .collect()
    }

    pub fn center(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate() {
            *ca = self.origin[a] + 0.5 * (self.counts[a] as f64 - 1.0) * self.spacing[a];
        }
        c
    }

    /// Distance from the centre to the outer cell faces, per axis.
    pub fn half_extent(&self) -> Vec3 {
        let mut h = [0.0; 3];
        for (a, ha) in h.iter_mut().enumerate() {
            *ha = 0.5 * self.counts[a] as f64 * self.spacing[a];
        }
        h
    }

    /// Same nodes translated by `d`.
    pub fn shifted(&self, d: Vec3) -> Self {
        let mut g = self.clone();
        for a in 0..3 {
            g.origin[a] += d[a];
        }
        g
    }

    /// Grid with half the spacing and twice the nodes, covering the same box.
    pub fn refined(&self) -> Result<Self> {
        let spacing = [
            self.spacing[0] / 2.0,
            self.spacing[1] / 2.0,
            self.spacing[2] / 2.0,
        ];
        let counts = [self.counts[0] * 2, self.counts[1] * 2, self.counts[2] * 2];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            // outer face stays put: origin - h/2 == origin' - h'/2
            origin[a] = self.origin[a] - 0.5 * self.spacing[a] + 0.5 * spacing[a];
        }
        Self::new(origin, spacing, counts)
    }

    /// Whether `idx` lies on one of the six outer faces.
    pub fn on_boundary(&self, idx: usize) -> bool {
        let ijk = self.unflatten(idx);
        (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.counts[a])
    }

    /// The k-space grid conjugate to this position grid: same counts,
    /// spacing `2π/(N h)`, wavenumbers `(j - N/2) Δk` for `j = 0..N`.
    pub fn conjugate(&self) -> Self {
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            let n = self.counts[a];
            spacing[a] = 2.0 * std::f64::consts::PI / (n as f64 * self.spacing[a]);
            origin[a] = -((n / 2) as f64) * spacing[a];
        }
        Self {
            origin,
            spacing,
            counts: self.counts,
        }
    }
}

/// Payload stored per node in a [`FieldGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadKind {
    Real,
    Complex,
    RealVector,
    ComplexVector,
    Spinor,
}

pub trait Payload: Copy + Send + Sync + Debug + 'static {
    const KIND: PayloadKind;
    fn zero() -> Self;
    fn is_finite(&self) -> bool;
    fn add(self, other: Self) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl Payload for f64 {
    const KIND: PayloadKind = PayloadKind::Real;
    fn zero() -> Self {
        0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Payload for Complex64 {
    const KIND: PayloadKind = PayloadKind::Complex;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Payload for Vec3 {
    const KIND: PayloadKind = PayloadKind::RealVector;
    fn zero() -> Self {
        [0.0; 3]
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
    fn add(self, o: Self) -> Self {
        [self[0] + o[0], self[1] + o[1], self[2] + o[2]]
    }
    fn scale(self, s: f64) -> Self {
        [self[0] * s, self[1] * s, self[2] * s]
    }
}

impl Payload for CVec3 {
    const KIND: PayloadKind = PayloadKind::ComplexVector;
    fn zero() -> Self {
        [Complex64::new(0.0, 0.0); 3]
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
    fn add(self, o: Self) -> Self {
        [self[0] + o[0], self[1] + o[1], self[2] + o[2]]
    }
    fn scale(self, s: f64) -> Self {
        [self[0] * s, self[1] * s, self[2] * s]
    }
}

impl Payload for Spinor {
    const KIND: PayloadKind = PayloadKind::Spinor;
    fn zero() -> Self {
        [Complex64::new(0.0, 0.0); 4]
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
    fn add(self, o: Self) -> Self {
        [
            self[0] + o[0],
            self[1] + o[1],
            self[2] + o[2],
            self[3] + o[3],
        ]
    }
    fn scale(self, s: f64) -> Self {
        [self[0] * s, self[1] * s, self[2] * s, self[3] * s]
    }
}

/// Per-node samples on a [`UniformGrid3`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid<T> {
    grid: UniformGrid3,
    values: Vec<T>,
}

impl<T: Payload> FieldGrid<T> {
    pub fn new(grid: UniformGrid3, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: UniformGrid3) -> Self {
        let values = vec![T::zero(); grid.len()];
        Self { grid, values }
    }

    /// Evaluates `f` at every node position (in parallel).
    pub fn from_fn<F>(grid: UniformGrid3, f: F) -> Self
    where
        F: Fn(Vec3) -> T + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(grid.node(i)))
            .collect();
        Self { grid, values }
    }

    pub fn kind(&self) -> PayloadKind {
        T::KIND
    }

    pub fn grid(&self) -> &UniformGrid3 {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn map<U: Payload, F>(&self, f: F) -> FieldGrid<U>
    where
        F: Fn(&T) -> U + Sync,
    {
        let values = self.values.par_iter().map(&f).collect();
        FieldGrid {
            grid: self.grid.clone(),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_axes() {
        assert!(UniformGrid3::new([0.0; 3], [1.0, 0.0, 1.0], [4, 4, 4]).is_err());
        assert!(UniformGrid3::new([0.0; 3], [1.0; 3], [4, 1, 4]).is_err());
        assert!(matches!(
            UniformGrid3::with_budget([0.0; 3], [1.0; 3], [10, 10, 10], 999),
            Err(Error::BudgetExceeded {
                requested: 1000,
                ..
            })
        ));
    }

    #[test]
    fn flat_index_round_trips() {
        let g = UniformGrid3::new([-1.0, 0.0, 2.0], [0.5, 1.0, 2.0], [3, 4, 5]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.unflatten(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.node(g.index(2, 3, 4)), [0.0, 3.0, 10.0]);
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = UniformGrid3::centered([1.0, 0.0, 0.0], [10.0, 5.0, 5.0], [1.0, 1.0, 0.5]).unwrap();
        assert_eq!(g.counts(), [20, 10, 20]);
        let c = g.center();
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
        assert_eq!(g.half_extent(), [10.0, 5.0, 5.0]);
    }

    #[test]
    fn refinement_keeps_box() {
        let g = UniformGrid3::centered([0.0; 3], [4.0; 3], [1.0; 3]).unwrap();
        let r = g.refined().unwrap();
        assert_eq!(r.half_extent(), g.half_extent());
        assert_eq!(r.counts(), [16; 3]);
        assert!((r.box_volume() - g.box_volume()).abs() < 1e-12);
    }

    #[test]
    fn conjugate_spacing() {
        let g = UniformGrid3::new([0.0; 3], [0.5, 1.0, 2.0], [8, 10, 16]).unwrap();
        let k = g.conjugate();
        for a in 0..3 {
            let prod = g.spacing()[a] * k.spacing()[a];
            assert!((prod - 2.0 * std::f64::consts::PI / g.counts()[a] as f64).abs() < 1e-14);
        }
        assert_eq!(k.origin()[0], -4.0 * k.spacing()[0]);
    }
}
