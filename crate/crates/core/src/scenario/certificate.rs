use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gridlab::{Peak, Vec3};
use crate::multipole::Certification;

/// Noise floor for relative comparisons: values whose magnitudes are both
/// below it are treated as equal.
pub const COMPARE_NOISE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Measured quantity the check is decided on.
    pub value: f64,
    /// Human-readable acceptance rule.
    pub rule: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadiationSummary {
    pub r0: f64,
    pub max_power: f64,
    pub power_zero: f64,
    pub b_zero: f64,
    /// Peak power of each series term, `m = 1..M`.
    pub term_peaks: Vec<f64>,
    /// Sphere power at the window centre over the Larmor power.
    pub larmor_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    /// `max |Q(t) − Q(t₀)| / |q|` over the window.
    pub charge_drift: f64,
    /// Worst relative continuity residual over the sampled times.
    pub continuity: Option<f64>,
    pub continuity_times: Vec<f64>,
    /// Dirac only: `max (|j| − cρ) / (c max ρ)`; never positive for a
    /// physical spinor.
    pub max_current_excess: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub kind: String,
    pub bin_width: f64,
    pub peaks: Vec<Peak>,
    pub floor: Option<f64>,
    pub low_band_power: Option<f64>,
    pub high_band_power: Option<f64>,
    pub band_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxEntry {
    pub r0: f64,
    pub t_obs: f64,
    pub power: f64,
    pub b_rms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub extent: f64,
    pub t_emit: f64,
    pub flux: Vec<FluxEntry>,
    pub b_exponent: Option<f64>,
    /// `P(R0) / P(2R0)` from the exact fields.
    pub decay_ratio: Option<f64>,
    /// `max |B_oracle − B_multipole| / max |B_multipole|` over the sphere.
    pub b_relative_delta: Option<f64>,
}

/// Machine-readable outcome of a scenario run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub scenario: String,
    pub model: String,
    pub schema_version: u32,
    pub max_order: usize,
    pub directions: Vec<Vec3>,
    pub certification: Vec<Certification>,
    pub radiation: Option<RadiationSummary>,
    pub conservation: Option<ConservationSummary>,
    pub closed_form_delta: Option<f64>,
    pub spectrum: Option<SpectrumSummary>,
    pub oracle: Option<OracleSummary>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl Certificate {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// Recomputes the verdict from the check list.
    pub fn finalize(&mut self) {
        self.pass = self.checks.iter().all(|c| c.pass);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub path: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub relative: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("certificates belong to different scenarios: `{0}` vs `{1}`")]
    ScenarioMismatch(String, String),
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, Option<f64>>) {
    match v {
        serde_json::Value::Number(n) => {
            out.insert(prefix.to_string(), n.as_f64());
        }
        serde_json::Value::Bool(b) => {
            out.insert(prefix.to_string(), Some(if *b { 1.0 } else { 0.0 }));
        }
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&p, x, out);
            }
        }
        serde_json::Value::Null => {
            out.insert(prefix.to_string(), None);
        }
        serde_json::Value::String(_) => {}
    }
}

/// Field-wise relative differences above `tolerance`. Fields present in
/// only one certificate are always reported.
pub fn compare(
    a: &Certificate,
    b: &Certificate,
    tolerance: f64,
) -> Result<Vec<FieldDiff>, CompareError> {
    if a.scenario != b.scenario {
        return Err(CompareError::ScenarioMismatch(
            a.scenario.clone(),
            b.scenario.clone(),
        ));
    }
    let mut fa = BTreeMap::new();
    let mut fb = BTreeMap::new();
    flatten(
        "",
        &serde_json::to_value(a).expect("certificate serializes"),
        &mut fa,
    );
    flatten(
        "",
        &serde_json::to_value(b).expect("certificate serializes"),
        &mut fb,
    );
    let mut keys: Vec<&String> = fa.keys().chain(fb.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::new();
    for k in keys {
        let (x, y) = (fa.get(k).copied().flatten(), fb.get(k).copied().flatten());
        let relative = match (x, y) {
            (Some(x), Some(y)) => {
                let scale = x.abs().max(y.abs()).max(COMPARE_NOISE_FLOOR);
                (x - y).abs() / scale
            }
            (None, None) if fa.contains_key(k) == fb.contains_key(k) => 0.0,
            _ => f64::INFINITY,
        };
        if relative > tolerance {
            out.push(FieldDiff {
                path: k.clone(),
                a: x,
                b: y,
                relative,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert() -> Certificate {
        Certificate {
            scenario: "s".into(),
            model: "schrodinger".into(),
            schema_version: 1,
            max_order: 2,
            directions: vec![[0.0, 0.0, 1.0]],
            certification: Vec::new(),
            radiation: Some(RadiationSummary {
                r0: 100.0,
                max_power: 1e-3,
                ..Default::default()
            }),
            conservation: None,
            closed_form_delta: None,
            spectrum: None,
            oracle: None,
            checks: vec![CheckResult {
                name: "x".into(),
                pass: true,
                value: 0.5,
                rule: "≤ 1".into(),
            }],
            pass: true,
        }
    }

    #[test]
    fn identical_certificates_have_no_diff() {
        let c = cert();
        assert!(compare(&c, &c, 1e-12).unwrap().is_empty());
        let back = Certificate::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn large_change_reported_with_path() {
        let a = cert();
        let mut b = cert();
        b.radiation.as_mut().unwrap().max_power = 1e-2;
        let d = compare(&a, &b, 1e-3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "radiation.max_power");
    }

    #[test]
    fn values_below_noise_floor_compare_equal() {
        let a = cert();
        let mut b = cert();
        b.radiation.as_mut().unwrap().power_zero = 1e-12;
        assert!(compare(&a, &b, 1e-3).unwrap().is_empty());
    }

    #[test]
    fn scenario_mismatch_rejected() {
        let a = cert();
        let mut b = cert();
        b.scenario = "other".into();
        assert!(compare(&a, &b, 1.0).is_err());
    }
}
