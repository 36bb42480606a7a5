use std::fmt::Write as _;
use std::path::Path;

use crate::gridlab::vec3::{norm, scale, sub};
use crate::gridlab::{
    scalar_spectrum, Spectrum, SphereQuadrature, TimeSampling, UniformGrid3, Vec3,
};
use crate::multipole::{
    certify_series, farfield_b, radiate, CartesianMoments, Certification, MomentHistory,
    ObservationGeometry, RadiationReport, BOUNDARY_DECAY_TOLERANCE,
};
use crate::oracle::{encode_history, flux_scan, retarded_fields, CurrentHistory};
use crate::relativistic::zitterbewegung_report;
use crate::source::{boundary_ratio, continuity_residual, CurrentSource};
use crate::Error;

use super::certificate::{
    Certificate, CheckResult, ConservationSummary, FluxEntry, OracleSummary, RadiationSummary,
    SpectrumSummary,
};
use super::config::{Expectation, Model, Scenario, ScenarioError, SpectrumKind};

/// Pipeline stages to execute after moment sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub certify: bool,
    pub conservation: bool,
    pub radiate: bool,
    pub spectrum: bool,
    pub oracle: bool,
}

impl Stages {
    pub fn all() -> Self {
        Self {
            certify: true,
            conservation: true,
            radiate: true,
            spectrum: true,
            oracle: true,
        }
    }

    pub fn none() -> Self {
        Self {
            certify: false,
            conservation: false,
            radiate: false,
            spectrum: false,
            oracle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub stages: Stages,
    /// Overrides `observation.max_order`.
    pub max_order: Option<usize>,
    /// `Some(true)` runs the oracle stage even when the scenario leaves it
    /// disabled; `Some(false)` skips it.
    pub oracle: Option<bool>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stages: Stages::all(),
            max_order: None,
            oracle: None,
        }
    }
}

/// Everything a run produces; nothing is written until [`RunOutput::write`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub certificate: Certificate,
    pub moments: MomentHistory,
    pub radiation: Option<RadiationReport>,
    pub spectrum: Option<Spectrum>,
    pub oracle_flux: Vec<FluxEntry>,
    pub history: Option<CurrentHistory>,
}

fn check(name: &str, pass: bool, value: f64, rule: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        pass,
        value,
        rule: rule.into(),
    }
}

/// Half-diagonal of the grid box. Depends only on the declared extent, so
/// refining the spacing leaves `R0` unchanged.
pub fn source_extent(grid: &UniformGrid3) -> f64 {
    norm(grid.half_extent())
}

fn nearest_node(grid: &UniformGrid3, x: Vec3) -> usize {
    let o = grid.origin();
    let s = grid.spacing();
    let c = grid.counts();
    let idx = [0, 1, 2].map(|a| (((x[a] - o[a]) / s[a]).round().max(0.0) as usize).min(c[a] - 1));
    grid.index(idx[0], idx[1], idx[2])
}

struct Sampled {
    history: MomentHistory,
    probe: Vec<f64>,
    current_excess: f64,
}

fn sample(
    source: &dyn CurrentSource,
    grid: &UniformGrid3,
    times: &TimeSampling,
    max_order: usize,
    probe: Option<usize>,
    subluminal: bool,
) -> Result<Sampled, ScenarioError> {
    let c = source.c();
    let mut samples = Vec::with_capacity(times.len());
    let mut charges = Vec::with_capacity(times.len());
    let mut probe_series = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    let mut current_excess: f64 = 0.0;
    for t in times.times() {
        let num = ScenarioError::numerical(format!("sampling the source at t = {t}"));
        let f = source.fields(grid, t).map_err(num)?;
        let ratio = boundary_ratio(&f.current);
        if ratio > BOUNDARY_DECAY_TOLERANCE {
            return Err(ScenarioError::numerical(format!(
                "sampling the source at t = {t}"
            ))(Error::BoundaryDecay { ratio }));
        }
        worst_ratio = worst_ratio.max(ratio);
        charges.push(
            f.charge()
                .map_err(ScenarioError::numerical("integrating the charge"))?,
        );
        if let Some(i) = probe {
            probe_series.push(f.rho.values()[i]);
        }
        if subluminal {
            let peak = f.rho.values().iter().cloned().fold(0.0, f64::max);
            for (r, j) in f.rho.values().iter().zip(f.current.values()) {
                if peak > 0.0 {
                    current_excess = current_excess.max((norm(*j) - c * r) / (c * peak));
                }
            }
        }
        samples.push(
            CartesianMoments::from_current(&f.current, max_order)
                .map_err(ScenarioError::numerical("computing moments"))?,
        );
    }
    Ok(Sampled {
        history: MomentHistory {
            times: times.clone(),
            max_order,
            samples,
            charges,
            boundary_ratio: worst_ratio,
        },
        probe: probe_series,
        current_excess,
    })
}

/// Executes the scenario pipeline: source, currents, moments, certification,
/// radiation, spectrum and (optionally) the retarded-field oracle.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput, ScenarioError> {
    let grid = scenario
        .grid
        .build()
        .map_err(|e| ScenarioError::schema("grid", e.to_string()))?;
    let times = scenario
        .time
        .build()
        .map_err(|e| ScenarioError::schema("time", e.to_string()))?;
    let max_order = opts.max_order.unwrap_or(scenario.observation.max_order);
    if !(1..=8).contains(&max_order) {
        return Err(ScenarioError::schema("max_order", "must be in 1..=8"));
    }
    let source = scenario.build_source(&grid)?;
    let c = source.c();
    let q = source.charge();
    let checks_cfg = &scenario.checks;
    let stages = opts.stages;
    let spectrum_cfg = checks_cfg.spectrum.as_ref().filter(|_| stages.spectrum);
    let probe = spectrum_cfg
        .filter(|s| s.kind == SpectrumKind::Density)
        .map(|s| nearest_node(&grid, s.probe));
    let subluminal = scenario.model == Model::Dirac && stages.conservation;
    let sampled = sample(source.as_ref(), &grid, &times, max_order, probe, subluminal)?;
    let history = sampled.history;
    let directions = scenario.directions();
    let mut checks = Vec::new();

    // certification
    let mut certification: Vec<Certification> = Vec::new();
    if stages.certify {
        let tol = scenario.tolerances.certify();
        for n in &directions {
            let series = history
                .series(*n)
                .map_err(ScenarioError::numerical("building moment series"))?;
            certification.push(
                certify_series(&series, &tol).map_err(ScenarioError::numerical("certifying"))?,
            );
        }
        let all_pass = certification.iter().all(|c| c.pass);
        if !all_pass && checks_cfg.expect == Expectation::Nonradiating {
            if let Ok(fine) = grid.refined() {
                let fine_source = scenario.build_source(&fine)?;
                let refined =
                    sample(fine_source.as_ref(), &fine, &times, max_order, None, false)?.history;
                for cert in certification.iter_mut().filter(|c| !c.pass) {
                    let s = refined
                        .series(cert.direction)
                        .map_err(ScenarioError::numerical("refined series"))?;
                    let f = certify_series(&s, &tol)
                        .map_err(ScenarioError::numerical("refined certification"))?;
                    let (a, b) = (
                        cert.worst_derivative_residual(),
                        f.worst_derivative_residual(),
                    );
                    let ratio = if a.min(b) > 0.0 {
                        a.max(b) / a.min(b)
                    } else {
                        f64::INFINITY
                    };
                    cert.quadrature_dominated = Some(ratio > 2.0);
                }
            }
        }
        let worst = certification
            .iter()
            .map(|c| c.worst_derivative_residual())
            .fold(0.0, f64::max);
        match checks_cfg.expect {
            Expectation::Nonradiating => checks.push(check(
                "certification",
                all_pass,
                worst,
                format!("degree ≤ m−1 and derivative residual ≤ {:e} for m = 1..{max_order}, all directions", scenario.tolerances.derivative),
            )),
            Expectation::Radiating => checks.push(check(
                "certification_fails",
                !all_pass,
                worst,
                "at least one order fails certification",
            )),
        }
    }

    // conservation
    let mut conservation = None;
    if stages.conservation && checks_cfg.conservation {
        let q0 = history.charges[0];
        let scale_q = if q != 0.0 { q.abs() } else { 1.0 };
        let drift = history
            .charges
            .iter()
            .map(|v| (v - q0).abs())
            .fold(0.0, f64::max)
            / scale_q;
        checks.push(check(
            "charge_conservation",
            drift <= scenario.tolerances.charge,
            drift,
            format!("≤ {:e}", scenario.tolerances.charge),
        ));
        let mut summary = ConservationSummary {
            charge_drift: drift,
            ..Default::default()
        };
        if let Some(cc) = &checks_cfg.continuity {
            let n = times.len();
            let k = cc.samples.min(n);
            let idx: Vec<usize> = if k == 1 {
                vec![n / 2]
            } else {
                (0..k)
                    .map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1))
                    .collect()
            };
            let mut worst: f64 = 0.0;
            let time_step = cc.time_step / source.max_frequency().max(1.0);
            for i in idx {
                let t = times.time(i);
                let r = continuity_residual(source.as_ref(), &grid, t, time_step, cc.space_step)
                    .map_err(ScenarioError::numerical(format!("continuity at t = {t}")))?;
                worst = worst.max(r.relative);
                summary.continuity_times.push(t);
            }
            summary.continuity = Some(worst);
            checks.push(check(
                "continuity",
                worst <= scenario.tolerances.continuity,
                worst,
                format!("≤ {:e}", scenario.tolerances.continuity),
            ));
        }
        if subluminal {
            summary.max_current_excess = Some(sampled.current_excess);
            checks.push(check(
                "subluminal_current",
                sampled.current_excess <= 1e-12,
                sampled.current_excess,
                "|j| − cρ ≤ 1e−12 · c max ρ",
            ));
        }
        conservation = Some(summary);
    }

    // closed-form ensemble moments
    let mut closed_form_delta = None;
    if stages.certify && checks_cfg.closed_form {
        if let Some(ens) = scenario.ensemble()? {
            let mut worst: f64 = 0.0;
            for n in &directions {
                let series = history
                    .series(*n)
                    .map_err(ScenarioError::numerical("building moment series"))?;
                for m in 1..=max_order {
                    let peak = series.peak(m).max(f64::MIN_POSITIVE);
                    for (i, t) in times.times().into_iter().enumerate() {
                        let d = norm(sub(series.order(m)[i], ens.closed_form_moment(*n, m, t)));
                        worst = worst.max(d / peak);
                    }
                }
            }
            closed_form_delta = Some(worst);
            checks.push(check(
                "closed_form_moments",
                worst <= 1e-8,
                worst,
                "≤ 1e−8 relative to the window peak",
            ));
        }
    }

    // radiation
    let extent = source_extent(&grid);
    let r0 = scenario.observation.r0_factor * extent;
    let mut radiation = None;
    let mut report = None;
    if stages.radiate {
        let sphere =
            SphereQuadrature::new(r0, scenario.observation.n_theta, scenario.observation.n_phi)
                .map_err(ScenarioError::numerical("building the sphere"))?;
        let rep = radiate(&history, &sphere, c, scenario.tolerances.zero)
            .map_err(ScenarioError::numerical("radiating"))?;
        let mut summary = RadiationSummary {
            r0,
            max_power: rep.max_power(),
            power_zero: rep.power_zero,
            b_zero: rep.b_zero,
            term_peaks: rep.term_peaks(),
            larmor_ratio: None,
        };
        if checks_cfg.expect == Expectation::Nonradiating {
            let value = if rep.power_zero > 0.0 {
                rep.max_power() / rep.power_zero
            } else {
                0.0
            };
            checks.push(check(
                "power_below_zero_threshold",
                value <= 1.0,
                value,
                "max P ≤ numerically-zero power",
            ));
        }
        if checks_cfg.larmor {
            let a = scenario.acceleration()?.ok_or_else(|| {
                ScenarioError::schema("checks.larmor", "requires model schrodinger_forced")
            })?;
            let center = times.time(times.len() / 2);
            let i = rep.nearest(center);
            let ratio = rep.power[i] / crate::multipole::larmor_power(a, q, c);
            summary.larmor_ratio = Some(ratio);
            let tol = scenario.tolerances.larmor;
            checks.push(check(
                "larmor_ratio",
                (ratio - 1.0).abs() <= tol,
                ratio,
                format!("within 1 ± {tol}"),
            ));
        }
        radiation = Some(summary);
        report = Some(rep);
    }

    // spectrum
    let mut spectrum_summary = None;
    let mut spectrum = None;
    if let Some(sc) = spectrum_cfg {
        match sc.kind {
            SpectrumKind::Moment => {
                let series = history
                    .series([0.0, 0.0, 1.0])
                    .map_err(ScenarioError::numerical("I₁ series"))?;
                let rep = zitterbewegung_report(
                    series.order(1),
                    &times,
                    &scenario.units,
                    source.max_frequency(),
                    sc.window,
                )
                .map_err(ScenarioError::numerical("spectral analysis"))?;
                if sc.high_band_peaks {
                    let lowest = rep.lowest_peak().unwrap_or(f64::NAN);
                    let ok = !rep.peaks.is_empty() && rep.peaks_in_high_band();
                    checks.push(check(
                        "high_band_peaks",
                        ok,
                        lowest,
                        format!(
                            "lowest peak ≥ 2mc²/ħ = {} − one bin",
                            2.0 * rep.rest_frequency
                        ),
                    ));
                }
                if let Some(max) = sc.max_band_ratio {
                    let r = rep.ratio.unwrap_or(f64::INFINITY);
                    checks.push(check(
                        "band_power_ratio",
                        r <= max,
                        r,
                        format!("P(ω < mc²/ħ) / P(ω ≥ 2mc²/ħ) ≤ {max:e}"),
                    ));
                }
                if sc.expect_no_peaks {
                    let top = rep.peaks.iter().map(|p| p.amplitude).fold(0.0, f64::max);
                    checks.push(check(
                        "no_spectral_peaks",
                        rep.peaks.is_empty(),
                        top,
                        format!("no non-DC peak above floor {:e}", rep.floor),
                    ));
                }
                if let Some(w) = sc.expected_omega {
                    push_expected(&mut checks, &rep.peaks, w, rep.spectrum.bin_width);
                }
                spectrum_summary = Some(SpectrumSummary {
                    kind: "moment".into(),
                    bin_width: rep.spectrum.bin_width,
                    peaks: rep.peaks.clone(),
                    floor: Some(rep.floor),
                    low_band_power: Some(rep.low_band_power),
                    high_band_power: Some(rep.high_band_power),
                    band_ratio: rep.ratio,
                });
                spectrum = Some(rep.spectrum);
            }
            SpectrumKind::Density => {
                let s = scalar_spectrum(&sampled.probe, times.dt(), sc.window)
                    .map_err(ScenarioError::numerical("density spectrum"))?;
                let peaks: Vec<_> = s.non_dc_peaks().into_iter().cloned().collect();
                if let Some(w) = sc.expected_omega {
                    push_expected(&mut checks, &peaks, w, s.bin_width);
                }
                if sc.expect_no_peaks {
                    let top = peaks.iter().map(|p| p.amplitude).fold(0.0, f64::max);
                    checks.push(check(
                        "no_spectral_peaks",
                        peaks.is_empty(),
                        top,
                        "no non-DC peak",
                    ));
                }
                spectrum_summary = Some(SpectrumSummary {
                    kind: "density".into(),
                    bin_width: s.bin_width,
                    peaks,
                    ..Default::default()
                });
                spectrum = Some(s);
            }
        }
    } else if stages.spectrum {
        spectrum = report.as_ref().and_then(|r| r.spectrum.clone());
    }

    // oracle
    let run_oracle = stages.oracle && opts.oracle.unwrap_or(checks_cfg.oracle.enabled);
    let mut oracle = None;
    let mut oracle_history = None;
    let mut oracle_flux = Vec::new();
    if run_oracle {
        let oc = &checks_cfg.oracle;
        let t_emit = times.time(times.len() / 2);
        let dt = times.dt();
        let half = (extent / c / dt).ceil() as usize + 3;
        let otimes = TimeSampling::new(t_emit - half as f64 * dt, dt, 2 * half + 1)
            .map_err(ScenarioError::numerical("oracle time window"))?;
        let h = CurrentHistory::record(source.as_ref(), &grid, &otimes)
            .map_err(ScenarioError::numerical("recording the current history"))?;
        let radii: Vec<f64> = oc.radii_factors.iter().map(|f| f * extent).collect();
        let scan = flux_scan(&h, &radii, t_emit, oc.n_theta, oc.n_phi, c)
            .map_err(ScenarioError::numerical("flux scan"))?;
        let mut summary = OracleSummary {
            extent,
            t_emit,
            b_exponent: scan.b_exponent,
            ..Default::default()
        };
        summary.flux = scan
            .rows
            .iter()
            .map(|r| FluxEntry {
                r0: r.r0,
                t_obs: r.t_obs,
                power: r.power,
                b_rms: r.b_rms,
            })
            .collect();
        let exponent = scan.b_exponent.unwrap_or(f64::NAN);
        if let Some(min) = oc.min_b_exponent {
            checks.push(check(
                "b_decay_exponent_min",
                exponent >= min,
                exponent,
                format!("≥ {min}"),
            ));
        }
        if let Some(max) = oc.max_b_exponent {
            checks.push(check(
                "b_decay_exponent_max",
                exponent <= max,
                exponent,
                format!("≤ {max}"),
            ));
        }
        if oc.decay {
            let pair = flux_scan(&h, &[r0, 2.0 * r0], t_emit, oc.n_theta, oc.n_phi, c)
                .map_err(ScenarioError::numerical("decay scan"))?;
            let (p1, p2) = (pair.rows[0].power.abs(), pair.rows[1].power.abs());
            let ratio = if p2 > 0.0 {
                p1 / p2
            } else if p1 > 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            };
            summary.decay_ratio = Some(ratio);
            let pass = ratio >= 3.0 || (p1 == 0.0 && p2 == 0.0);
            checks.push(check("flux_decay", pass, ratio, "P(R0) / P(2R0) ≥ 3"));
            summary.flux.extend(pair.rows.iter().map(|r| FluxEntry {
                r0: r.r0,
                t_obs: r.t_obs,
                power: r.power,
                b_rms: r.b_rms,
            }));
        }
        if oc.compare_b {
            let sphere = SphereQuadrature::new(r0, oc.n_theta, oc.n_phi)
                .map_err(ScenarioError::numerical("sphere"))?;
            let t_obs = t_emit + r0 / c;
            let mut max_delta: f64 = 0.0;
            let mut max_b: f64 = 0.0;
            for node in sphere.nodes() {
                let n = node.direction;
                let series = history
                    .series(n)
                    .map_err(ScenarioError::numerical("moment series"))?;
                let geo = ObservationGeometry::new(n, r0, c)
                    .map_err(ScenarioError::numerical("geometry"))?;
                let bm = farfield_b(&series, &geo, t_obs)
                    .map_err(ScenarioError::numerical("multipole B"))?
                    .b;
                let bo = retarded_fields(&h, scale(n, r0), t_obs, c)
                    .map_err(ScenarioError::numerical("oracle B"))?
                    .b;
                max_delta = max_delta.max(norm(sub(bo, bm)));
                max_b = max_b.max(norm(bm));
            }
            let rel = if max_b > 0.0 {
                max_delta / max_b
            } else {
                f64::INFINITY
            };
            summary.b_relative_delta = Some(rel);
            let tol = scenario.tolerances.oracle_b;
            checks.push(check(
                "oracle_multipole_b",
                rel <= tol,
                rel,
                format!("≤ {tol}"),
            ));
        }
        oracle_flux = summary.flux.clone();
        oracle = Some(summary);
        oracle_history = Some(h);
    }

    let mut certificate = Certificate {
        scenario: scenario.id.clone(),
        model: scenario.model.name().into(),
        schema_version: scenario.schema_version,
        max_order,
        directions,
        certification,
        radiation,
        conservation,
        closed_form_delta,
        spectrum: spectrum_summary,
        oracle,
        checks,
        pass: false,
    };
    certificate.finalize();
    Ok(RunOutput {
        certificate,
        moments: history,
        radiation: report,
        spectrum,
        oracle_flux,
        history: oracle_history,
    })
}

fn push_expected(
    checks: &mut Vec<CheckResult>,
    peaks: &[crate::gridlab::Peak],
    omega: f64,
    bin: f64,
) {
    let top = peaks
        .iter()
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
    let got = top.map_or(f64::NAN, |p| p.omega);
    checks.push(check(
        "expected_peak",
        (got - omega).abs() <= bin,
        got,
        format!("strongest non-DC peak within one bin ({bin:.3e}) of {omega}"),
    ));
}

impl RunOutput {
    /// `t,m,Ix,Iy,Iz` along the first certification direction.
    pub fn moments_csv(&self) -> String {
        let n = self
            .certificate
            .directions
            .first()
            .copied()
            .unwrap_or([0.0, 0.0, 1.0]);
        let mut out = String::from("t,m,Ix,Iy,Iz\n");
        if let Ok(series) = self.moments.series(n) {
            for (i, t) in series.times.times().into_iter().enumerate() {
                for m in 1..=series.max_order {
                    let v = series.order(m)[i];
                    let _ = writeln!(out, "{t},{m},{},{},{}", v[0], v[1], v[2]);
                }
            }
        }
        out
    }

    /// `R0,t,P`: the multipole power series at the observation sphere,
    /// followed by the oracle flux rows.
    pub fn flux_csv(&self) -> String {
        let mut out = String::from("R0,t,P\n");
        if let Some(r) = &self.radiation {
            for (t, p) in r.t_obs.iter().zip(&r.power) {
                let _ = writeln!(out, "{},{t},{p}", r.r0);
            }
        }
        for f in &self.oracle_flux {
            let _ = writeln!(out, "{},{},{}", f.r0, f.t_obs, f.power);
        }
        out
    }

    /// `omega,amplitude`.
    pub fn spectrum_csv(&self) -> String {
        let mut out = String::from("omega,amplitude\n");
        if let Some(s) = &self.spectrum {
            for (w, a) in s.omega.iter().zip(&s.amplitude) {
                let _ = writeln!(out, "{w},{a}");
            }
        }
        out
    }

    /// Writes the certificate, CSVs and (when recorded) the history
    /// container into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ScenarioError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let files = [
            ("certificate.json", self.certificate.to_json()),
            ("moments.csv", self.moments_csv()),
            ("flux.csv", self.flux_csv()),
            ("spectrum.csv", self.spectrum_csv()),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io(&p))?;
        }
        if let Some(h) = &self.history {
            let p = dir.join("history.srch");
            let f = std::fs::File::create(&p).map_err(io(&p))?;
            encode_history(h, std::io::BufWriter::new(f)).map_err(|e| {
                ScenarioError::Numerical {
                    context: "writing the history container".into(),
                    source: e,
                }
            })?;
        }
        Ok(())
    }
}
