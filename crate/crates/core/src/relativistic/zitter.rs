use serde::{Deserialize, Serialize};

use crate::gridlab::{band_power, spectrum, Peak, Spectrum, TimeSampling, Vec3, Window};
use crate::schrodinger::Units;
use crate::{Error, Result};

/// Leakage floor relative to the larger of the raw DC level and the largest
/// oscillatory amplitude.
pub const ZITTER_FLOOR: f64 = 1e-4;

/// Spectral split of an `I₁(t)` series into the sub-rest-energy band and the
/// band at and above twice the rest energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZitterReport {
    /// Spectrum of the series after subtracting its window-weighted mean.
    pub spectrum: Spectrum,
    /// `mc²/ħ`.
    pub rest_frequency: f64,
    /// Amplitude below which spectral features count as leakage.
    pub floor: f64,
    /// Non-DC peaks at or above the floor.
    pub peaks: Vec<Peak>,
    /// Power in `ω < mc²/ħ`, DC main lobe excluded.
    pub low_band_power: f64,
    /// Power in `ω ≥ 2mc²/ħ`.
    pub high_band_power: f64,
    /// `low / high`, or `None` when the high band is empty.
    pub ratio: Option<f64>,
}

impl ZitterReport {
    /// Lowest located peak frequency, if any.
    pub fn lowest_peak(&self) -> Option<f64> {
        self.peaks.iter().map(|p| p.omega).reduce(f64::min)
    }

    /// Every located peak lies at `ω ≥ 2mc²/ħ` up to one bin.
    pub fn peaks_in_high_band(&self) -> bool {
        self.peaks
            .iter()
            .all(|p| p.omega >= 2.0 * self.rest_frequency - self.spectrum.bin_width)
    }
}

/// Spectral analysis of a moment series `I₁(t)`. `max_frequency` is the
/// fastest angular frequency expected in the series (e.g. `2E_max/ħ`); the
/// sampling must resolve it with at least 8 samples per period.
pub fn zitterbewegung_report(
    series: &[Vec3],
    times: &TimeSampling,
    units: &Units,
    max_frequency: f64,
    window: Window,
) -> Result<ZitterReport> {
    if series.len() != times.len() {
        return Err(Error::InvalidParameter(format!(
            "series has {} samples, time sampling {}",
            series.len(),
            times.len()
        )));
    }
    times.check_resolves(max_frequency)?;
    let raw = spectrum(series, times.dt(), window)?;
    let w = window.coefficients(series.len());
    let wsum: f64 = w.iter().sum();
    let mut mean = [0.0; 3];
    for (v, wi) in series.iter().zip(&w) {
        for a in 0..3 {
            mean[a] += v[a] * wi / wsum;
        }
    }
    let centred: Vec<Vec3> = series
        .iter()
        .map(|v| [v[0] - mean[0], v[1] - mean[1], v[2] - mean[2]])
        .collect();
    let mut s = spectrum(&centred, times.dt(), window)?;
    let lobe = window.main_lobe_bins();
    let ac_max = s.amplitude.iter().skip(lobe).cloned().fold(0.0, f64::max);
    let floor = ZITTER_FLOOR * raw.amplitude[0].max(ac_max);
    let s_max = s.amplitude.iter().cloned().fold(0.0, f64::max);
    s.peaks = if s_max > 0.0 {
        s.find_peaks(floor / s_max)
    } else {
        Vec::new()
    };
    let peaks: Vec<Peak> = s
        .peaks
        .iter()
        .filter(|p| p.bin >= lobe && p.amplitude >= floor)
        .cloned()
        .collect();
    let rest_frequency = units.mass * units.c * units.c / units.hbar;
    let low_band_power = band_power(&s, 0.0, rest_frequency, lobe);
    let high_band_power = band_power(&s, 2.0 * rest_frequency, f64::INFINITY, lobe);
    let ratio = (high_band_power > 0.0).then(|| low_band_power / high_band_power);
    Ok(ZitterReport {
        spectrum: s,
        rest_frequency,
        floor,
        peaks,
        low_band_power,
        high_band_power,
        ratio,
    })
}
