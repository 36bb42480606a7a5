use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::vec3::Vec3;
use crate::{Error, Result};

/// Minimum series length for spectral analysis.
pub const MIN_SPECTRUM_SAMPLES: usize = 32;

/// Default relative threshold for peak detection.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
    /// 4-term Blackman–Harris; sidelobes near −92 dB.
    #[default]
    BlackmanHarris,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let x = |i: usize| 2.0 * PI * i as f64 / n as f64;
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * x(i).cos()).collect(),
            Window::BlackmanHarris => (0..n)
                .map(|i| {
                    let a = x(i);
                    0.35875 - 0.48829 * a.cos() + 0.14128 * (2.0 * a).cos()
                        - 0.01168 * (3.0 * a).cos()
                })
                .collect(),
        }
    }

    /// Half-width of the main lobe in bins.
    pub fn main_lobe_bins(self) -> usize {
        match self {
            Window::Rectangular => 1,
            Window::Hann => 2,
            Window::BlackmanHarris => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub bin: usize,
    /// Interpolated angular frequency.
    pub omega: f64,
    pub amplitude: f64,
}

/// Single-sided amplitude spectrum of a (vector) series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub window: Window,
    /// Angular frequency of bin `k` is `k · bin_width`.
    pub bin_width: f64,
    pub omega: Vec<f64>,
    /// Euclidean combination of component amplitudes; a pure
    /// `A cos(ω t)` on a bin centre reads `A`.
    pub amplitude: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl Spectrum {
    /// Local maxima at or above `rel_threshold × max amplitude`, with
    /// log-parabolic frequency interpolation.
    pub fn find_peaks(&self, rel_threshold: f64) -> Vec<Peak> {
        let a = &self.amplitude;
        let max = a.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return Vec::new();
        }
        let floor = rel_threshold * max;
        let n = a.len();
        let mut peaks = Vec::new();
        let lobe = self.window.main_lobe_bins().min(n);
        // the DC main lobe is one feature, reported at bin 0
        let dc = a[..lobe].iter().cloned().fold(0.0, f64::max);
        if dc >= floor && dc > 0.0 {
            peaks.push(Peak {
                bin: 0,
                omega: 0.0,
                amplitude: a[0],
            });
        }
        for k in lobe..n {
            let left = a[k - 1];
            let right = if k + 1 < n { a[k + 1] } else { 0.0 };
            let is_max = a[k] > left && a[k] >= right;
            if !is_max || a[k] < floor || a[k] == 0.0 {
                continue;
            }
            let mut delta = 0.0;
            if k + 1 < n && left > 0.0 && right > 0.0 {
                let (l, c, r) = (left.ln(), a[k].ln(), right.ln());
                let den = l - 2.0 * c + r;
                if den < 0.0 {
                    delta = (0.5 * (l - r) / den).clamp(-0.5, 0.5);
                }
            }
            peaks.push(Peak {
                bin: k,
                omega: (k as f64 + delta) * self.bin_width,
                amplitude: a[k],
            });
        }
        peaks
    }

    /// Peaks outside the DC main lobe.
    pub fn non_dc_peaks(&self) -> Vec<&Peak> {
        let lobe = self.window.main_lobe_bins();
        self.peaks.iter().filter(|p| p.bin >= lobe).collect()
    }

    /// Replaces the stored peak list using a different threshold.
    pub fn with_threshold(mut self, rel_threshold: f64) -> Self {
        self.peaks = self.find_peaks(rel_threshold);
        self
    }
}

/// Windowed DFT of each component of a uniformly sampled vector series.
pub fn spectrum(series: &[Vec3], dt: f64, window: Window) -> Result<Spectrum> {
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| series.iter().map(|v| v[c]).collect())
        .collect();
    spectrum_components(&comps, dt, window)
}

/// Scalar variant of [`spectrum`].
pub fn scalar_spectrum(series: &[f64], dt: f64, window: Window) -> Result<Spectrum> {
    spectrum_components(&[series.to_vec()], dt, window)
}

fn spectrum_components(comps: &[Vec<f64>], dt: f64, window: Window) -> Result<Spectrum> {
    let n = comps[0].len();
    if n < MIN_SPECTRUM_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SPECTRUM_SAMPLES,
            got: n,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let w = window.coefficients(n);
    let wsum: f64 = w.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let nbins = n / 2 + 1;
    let mut power = vec![0.0; nbins];
    for comp in comps {
        let mut buf: Vec<Complex64> = comp
            .iter()
            .zip(&w)
            .map(|(x, w)| Complex64::new(x * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            let gain = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            *p += (gain * buf[k].norm() / wsum).powi(2);
        }
    }
    let bin_width = 2.0 * PI / (n as f64 * dt);
    let mut s = Spectrum {
        window,
        bin_width,
        omega: (0..nbins).map(|k| k as f64 * bin_width).collect(),
        amplitude: power.into_iter().map(f64::sqrt).collect(),
        peaks: Vec::new(),
    };
    s.peaks = s.find_peaks(DEFAULT_PEAK_THRESHOLD);
    Ok(s)
}

/// Sum of squared amplitudes over bins with `lo ≤ ω < hi`, skipping bins
/// below `skip_bins`.
pub fn band_power(s: &Spectrum, lo: f64, hi: f64, skip_bins: usize) -> f64 {
    s.omega
        .iter()
        .zip(&s.amplitude)
        .enumerate()
        .filter(|(k, (w, _))| *k >= skip_bins && **w >= lo && **w < hi)
        .map(|(_, (_, a))| a * a)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_gives_single_peak_near_frequency() {
        let (n, dt, w0) = (128, 0.1, 3.3);
        let s: Vec<f64> = (0..n).map(|i| (w0 * i as f64 * dt).cos()).collect();
        for win in [Window::Hann, Window::BlackmanHarris] {
            let sp = scalar_spectrum(&s, dt, win).unwrap().with_threshold(1e-2);
            assert_eq!(sp.peaks.len(), 1, "{win:?}: {:?}", sp.peaks);
            assert!((sp.peaks[0].omega - w0).abs() < sp.bin_width);
        }
    }

    #[test]
    fn constant_series_only_dc() {
        let s = vec![2.5; 64];
        let sp = scalar_spectrum(&s, 1.0, Window::BlackmanHarris).unwrap();
        assert_eq!(sp.peaks.len(), 1);
        assert_eq!(sp.peaks[0].bin, 0);
        assert!((sp.peaks[0].amplitude - 2.5).abs() < 1e-12);
        assert!(sp.non_dc_peaks().is_empty());
    }

    #[test]
    fn on_bin_amplitude_and_band_split() {
        let (n, dt) = (256, 0.05);
        let bw = 2.0 * PI / (n as f64 * dt);
        let w0 = 40.0 * bw;
        let s: Vec<Vec3> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                [0.7 * (w0 * t).cos(), 0.0, 0.0]
            })
            .collect();
        let sp = spectrum(&s, dt, Window::Hann).unwrap();
        assert!((sp.amplitude[40] - 0.7).abs() < 1e-12);
        let low = band_power(&sp, 0.0, 20.0 * bw, 0);
        let high = band_power(&sp, 35.0 * bw, f64::INFINITY, 0);
        assert!(low < 1e-20 * high);
    }

    #[test]
    fn short_series_rejected() {
        assert!(scalar_spectrum(&[0.0; 31], 1.0, Window::Hann).is_err());
    }
}
