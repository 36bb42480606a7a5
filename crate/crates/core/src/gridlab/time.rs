use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform time sampling `t_start + i·dt`, `i = 0..n_samples`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSampling {
    t_start: f64,
    dt: f64,
    n_samples: usize,
}

impl TimeSampling {
    pub fn new(t_start: f64, dt: f64, n_samples: usize) -> Result<Self> {
        if !t_start.is_finite() {
            return Err(Error::InvalidParameter("t_start must be finite".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if n_samples < 5 {
            return Err(Error::TooFewSamples {
                needed: 5,
                got: n_samples,
            });
        }
        Ok(Self {
            t_start,
            dt,
            n_samples,
        })
    }

    /// Sampling of `n_samples` points symmetric about `center`.
    pub fn centered(center: f64, dt: f64, n_samples: usize) -> Result<Self> {
        Self::new(center - 0.5 * (n_samples as f64 - 1.0) * dt, dt, n_samples)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_samples - 1)
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.n_samples as f64 - 1.0)
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|i| self.time(i)).collect()
    }

    /// Samples per period of angular frequency `omega`.
    pub fn samples_per_period(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            f64::INFINITY
        } else {
            2.0 * PI / (omega * self.dt)
        }
    }

    /// Rejects sampling that resolves `omega` with fewer than 8 samples per
    /// period.
    pub fn check_resolves(&self, omega: f64) -> Result<()> {
        let spp = self.samples_per_period(omega);
        if spp < 8.0 {
            Err(Error::UnderResolved {
                samples_per_period: spp,
            })
        } else {
            Ok(())
        }
    }

    /// Index of the sample at time `t`, if `t` is on the lattice.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t_start) / self.dt;
        let i = x.round();
        if (x - i).abs() <= 1e-6 && i >= 0.0 && (i as usize) < self.n_samples {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Half the step and twice the intervals over the same window.
    pub fn refined(&self) -> Self {
        Self {
            t_start: self.t_start,
            dt: self.dt / 2.0,
            n_samples: 2 * self.n_samples - 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TimeSampling::new(0.0, 0.0, 10).is_err());
        assert!(matches!(
            TimeSampling::new(0.0, 1.0, 4),
            Err(Error::TooFewSamples { .. })
        ));
        let s = TimeSampling::centered(0.0, 0.5, 9).unwrap();
        assert_eq!(s.t_start(), -2.0);
        assert_eq!(s.t_end(), 2.0);
        assert_eq!(s.index_of(0.5), Some(5));
        assert_eq!(s.index_of(0.3), None);
    }

    #[test]
    fn resolution_rule() {
        let s = TimeSampling::new(0.0, 0.1, 10).unwrap();
        assert!(s.check_resolves(2.0 * PI / 0.8).is_ok());
        assert!(s.check_resolves(2.0 * PI / 0.7).is_err());
        let r = s.refined();
        assert_eq!(r.t_end(), s.t_end());
        assert_eq!(r.len(), 19);
    }
}
