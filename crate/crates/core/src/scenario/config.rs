use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleMember, NewtonianEnsemble};
use crate::gridlab::vec3::normalized;
use crate::gridlab::{TimeSampling, UniformGrid3, Vec3, Window, DEFAULT_NODE_BUDGET};
use crate::multipole::CertifyTolerances;
use crate::relativistic::{DiracComponent, DiracSource, DiracState, KGState, KgSource};
use crate::schrodinger::{
    check_band_limit, BandLimit, BandLimitReport, GaussianComponent, GaussianPacketSet, MixedState,
    SchrodingerSource, UniformForce, Units,
};
use crate::source::CurrentSource;

pub const SCHEMA_VERSION: u32 = 1;

/// Configuration and pipeline failures. The CLI maps `Io`, `Parse` and
/// `Schema` to a usage error and `Numerical` to a numerical rejection.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: crate::Error,
    },
}

impl ScenarioError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numerical(context: impl Into<String>) -> impl FnOnce(crate::Error) -> Self {
        let context = context.into();
        move |source| Self::Numerical { context, source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Schrodinger,
    SchrodingerForced,
    KgPlus,
    KgMinus,
    KgMixed,
    Dirac,
    Newtonian,
    MixedState,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Schrodinger => "schrodinger",
            Model::SchrodingerForced => "schrodinger_forced",
            Model::KgPlus => "kg_plus",
            Model::KgMinus => "kg_minus",
            Model::KgMixed => "kg_mixed",
            Model::Dirac => "dirac",
            Model::Newtonian => "newtonian",
            Model::MixedState => "mixed_state",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub center: Vec3,
    pub half_extent: Vec3,
    pub spacing: Vec3,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

impl GridSpec {
    pub fn build(&self) -> crate::Result<UniformGrid3> {
        let g = UniformGrid3::centered(self.center, self.half_extent, self.spacing)?;
        UniformGrid3::with_budget(g.origin(), g.spacing(), g.counts(), self.node_budget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub center: f64,
    pub dt: f64,
    pub n_samples: usize,
}

impl TimeSpec {
    pub fn build(&self) -> crate::Result<TimeSampling> {
        TimeSampling::centered(self.center, self.dt, self.n_samples)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSpec {
    /// Certification directions; normalized on use.
    pub directions: Vec<Vec3>,
    pub max_order: usize,
    /// Sphere radius as a multiple of the source extent (grid half-diagonal).
    pub r0_factor: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            directions: vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
                [1.0, -2.0, 0.5],
                [-0.3, 0.4, -1.2],
            ],
            max_order: 4,
            r0_factor: 100.0,
            n_theta: 12,
            n_phi: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub fit: f64,
    pub derivative: f64,
    pub max_fit_degree: usize,
    /// Relative size below which radiated fields count as zero.
    pub zero: f64,
    pub continuity: f64,
    pub charge: f64,
    /// Relative band of the power ratio to the Larmor formula.
    pub larmor: f64,
    /// Relative agreement required between oracle and multipole `B`.
    pub oracle_b: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fit: 1e-6,
            derivative: 1e-6,
            max_fit_degree: 6,
            zero: 1e-6,
            continuity: 1e-6,
            charge: 1e-8,
            larmor: 0.05,
            oracle_b: 0.03,
        }
    }
}

impl Tolerances {
    pub fn certify(&self) -> CertifyTolerances {
        CertifyTolerances {
            fit_tol: self.fit,
            derivative_tol: self.derivative,
            max_fit_degree: self.max_fit_degree,
        }
    }
}

/// Physical outcome the scenario is expected to show.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Nonradiating,
    Radiating,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// `I₁(t)` with the band split around the rest energy.
    #[default]
    Moment,
    /// `ρ(probe, t)` at the node nearest to `probe`.
    Density,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumCheck {
    #[serde(default)]
    pub kind: SpectrumKind,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub probe: Vec3,
    /// Expected angular frequency of the strongest non-DC peak.
    #[serde(default)]
    pub expected_omega: Option<f64>,
    /// Require at least one peak, with every located peak at
    /// `ω ≥ 2mc²/ħ` up to one bin.
    #[serde(default)]
    pub high_band_peaks: bool,
    /// Upper bound on the power below `mc²/ħ` over the power at and above
    /// `2mc²/ħ`.
    #[serde(default)]
    pub max_band_ratio: Option<f64>,
    /// Require no non-DC peak above the leakage floor.
    #[serde(default)]
    pub expect_no_peaks: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuityCheck {
    /// Number of sampled times, spread evenly over the window.
    pub samples: usize,
    /// Finite-difference step for ∂ρ/∂t, divided by max(1, ω_max) of the
    /// source so the stencil error stays fixed for fast bilinear terms.
    pub time_step: f64,
    pub space_step: f64,
}

impl Default for ContinuityCheck {
    fn default() -> Self {
        Self {
            samples: 3,
            time_step: 0.02,
            space_step: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleCheck {
    pub enabled: bool,
    /// Flux-scan radii as multiples of the source extent.
    pub radii_factors: Vec<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Required fitted `|B|` decay exponent (inclusive bounds).
    pub min_b_exponent: Option<f64>,
    pub max_b_exponent: Option<f64>,
    /// Compare oracle and multipole `B` at `R0` over the sphere.
    pub compare_b: bool,
    /// Require `P(R0)/P(2R0) ≥ 3` from the exact fields.
    pub decay: bool,
}

impl Default for OracleCheck {
    fn default() -> Self {
        Self {
            enabled: false,
            radii_factors: vec![50.0, 100.0, 200.0, 400.0],
            n_theta: 6,
            n_phi: 12,
            min_b_exponent: None,
            max_b_exponent: None,
            compare_b: false,
            decay: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    pub expect: Expectation,
    pub certify: bool,
    pub conservation: bool,
    pub continuity: Option<ContinuityCheck>,
    /// Compare the sphere power with the Larmor formula at the window centre.
    pub larmor: bool,
    /// Compare grid moments with the closed-form ensemble moments.
    pub closed_form: bool,
    pub spectrum: Option<SpectrumCheck>,
    pub oracle: OracleCheck,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            expect: Expectation::Nonradiating,
            certify: true,
            conservation: true,
            continuity: None,
            larmor: false,
            closed_form: false,
            spectrum: None,
            oracle: OracleCheck::default(),
        }
    }
}

/// Scenario file contents. `state` is kept as a raw table and decoded per
/// model by [`Scenario::state`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub model: Model,
    #[serde(default)]
    pub units: Units,
    pub state: toml::Table,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub observation: ObservationSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchrodingerSpec {
    pub components: Vec<GaussianComponent>,
    #[serde(default)]
    pub band_limit: BandLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedSpec {
    pub components: Vec<GaussianComponent>,
    pub force: Vec3,
    #[serde(default)]
    pub band_limit: BandLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedMemberSpec {
    pub weight: f64,
    /// Overrides the scenario's `ħ` for this member.
    #[serde(default)]
    pub hbar: Option<f64>,
    pub components: Vec<GaussianComponent>,
    #[serde(default)]
    pub band_limit: BandLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedSpec {
    pub members: Vec<MixedMemberSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgSpec {
    #[serde(default)]
    pub plus: Vec<GaussianComponent>,
    #[serde(default)]
    pub minus: Vec<GaussianComponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracSpec {
    pub components: Vec<DiracComponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonianSpec {
    pub members: Vec<EnsembleMember>,
}

/// Model-specific state, decoded and checked for required keys.
#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    Schrodinger(SchrodingerSpec),
    Forced(ForcedSpec),
    Mixed(MixedSpec),
    Kg(KgSpec),
    Dirac(DiracSpec),
    Newtonian(NewtonianSpec),
}

fn decode<T: DeserializeOwned>(prefix: &str, table: &toml::Table) -> Result<T, ScenarioError> {
    let value = toml::Value::Table(table.clone());
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        ScenarioError::schema(path, e.into_inner().to_string())
    })
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::schema(
                if path == "." { "<root>".into() } else { path },
                e.into_inner().message().to_string(),
            )
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }

    /// Structural checks beyond the serde schema.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::schema(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.id.trim().is_empty() {
            return Err(ScenarioError::schema("id", "must not be empty"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("fit", t.fit),
            ("derivative", t.derivative),
            ("zero", t.zero),
            ("continuity", t.continuity),
            ("charge", t.charge),
            ("larmor", t.larmor),
            ("oracle_b", t.oracle_b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::schema(
                    format!("tolerances.{name}"),
                    "must be positive",
                ));
            }
        }
        let o = &self.observation;
        if !(1..=8).contains(&o.max_order) {
            return Err(ScenarioError::schema(
                "observation.max_order",
                "must be in 1..=8",
            ));
        }
        if o.directions.is_empty() {
            return Err(ScenarioError::schema(
                "observation.directions",
                "needs at least one direction",
            ));
        }
        for (i, d) in o.directions.iter().enumerate() {
            if normalized(*d).is_none() || d.iter().any(|v| !v.is_finite()) {
                return Err(ScenarioError::schema(
                    format!("observation.directions[{i}]"),
                    "must be finite and nonzero",
                ));
            }
        }
        if !(o.r0_factor >= 50.0 && o.r0_factor.is_finite()) {
            return Err(ScenarioError::schema(
                "observation.r0_factor",
                "must be at least 50",
            ));
        }
        if o.n_theta == 0 || o.n_phi == 0 {
            return Err(ScenarioError::schema(
                "observation",
                "sphere orders must be positive",
            ));
        }
        if let Some(c) = &self.checks.continuity {
            if c.samples == 0 || !(c.time_step > 0.0) || !(c.space_step > 0.0) {
                return Err(ScenarioError::schema(
                    "checks.continuity",
                    "samples and steps must be positive",
                ));
            }
        }
        if let Some(s) = &self.checks.spectrum {
            if s.max_band_ratio.is_some_and(|r| !(r > 0.0)) {
                return Err(ScenarioError::schema(
                    "checks.spectrum.max_band_ratio",
                    "must be positive",
                ));
            }
        }
        let oc = &self.checks.oracle;
        if oc.enabled
            && (oc.radii_factors.iter().any(|f| !(*f > 0.0)) || oc.n_theta == 0 || oc.n_phi == 0)
        {
            return Err(ScenarioError::schema(
                "checks.oracle",
                "radii factors and sphere orders must be positive",
            ));
        }
        self.state()?;
        Ok(())
    }

    /// Decodes `state` for the declared model.
    pub fn state(&self) -> Result<StateSpec, ScenarioError> {
        let t = &self.state;
        let nonempty = |len: usize, key: &str| -> Result<(), ScenarioError> {
            if len == 0 {
                Err(ScenarioError::schema(
                    format!("state.{key}"),
                    "must not be empty",
                ))
            } else {
                Ok(())
            }
        };
        Ok(match self.model {
            Model::Schrodinger => {
                let s: SchrodingerSpec = decode("state", t)?;
                nonempty(s.components.len(), "components")?;
                StateSpec::Schrodinger(s)
            }
            Model::SchrodingerForced => {
                let s: ForcedSpec = decode("state", t)?;
                nonempty(s.components.len(), "components")?;
                StateSpec::Forced(s)
            }
            Model::MixedState => {
                let s: MixedSpec = decode("state", t)?;
                nonempty(s.members.len(), "members")?;
                for (i, m) in s.members.iter().enumerate() {
                    nonempty(m.components.len(), &format!("members[{i}].components"))?;
                }
                StateSpec::Mixed(s)
            }
            Model::KgPlus | Model::KgMinus | Model::KgMixed => {
                let s: KgSpec = decode("state", t)?;
                let (need_plus, need_minus) = match self.model {
                    Model::KgPlus => (true, false),
                    Model::KgMinus => (false, true),
                    _ => (true, true),
                };
                for (key, have, need) in [
                    ("plus", s.plus.len(), need_plus),
                    ("minus", s.minus.len(), need_minus),
                ] {
                    if need && have == 0 {
                        return Err(ScenarioError::schema(
                            format!("state.{key}"),
                            "required for this model",
                        ));
                    }
                    if !need && have > 0 {
                        return Err(ScenarioError::schema(
                            format!("state.{key}"),
                            format!("not allowed for model {}", self.model.name()),
                        ));
                    }
                }
                StateSpec::Kg(s)
            }
            Model::Dirac => {
                let s: DiracSpec = decode("state", t)?;
                nonempty(s.components.len(), "components")?;
                StateSpec::Dirac(s)
            }
            Model::Newtonian => {
                let s: NewtonianSpec = decode("state", t)?;
                nonempty(s.members.len(), "members")?;
                StateSpec::Newtonian(s)
            }
        })
    }

    /// Band-limit reports of every Schrödinger-type component list.
    pub fn band_limit_reports(&self) -> Result<Vec<BandLimitReport>, ScenarioError> {
        Ok(match self.state()? {
            StateSpec::Schrodinger(s) => {
                vec![check_band_limit(&s.components, &self.units, &s.band_limit)]
            }
            StateSpec::Forced(s) => {
                vec![check_band_limit(&s.components, &self.units, &s.band_limit)]
            }
            StateSpec::Mixed(s) => s
                .members
                .iter()
                .map(|m| check_band_limit(&m.components, &self.member_units(m), &m.band_limit))
                .collect(),
            _ => Vec::new(),
        })
    }

    fn member_units(&self, m: &MixedMemberSpec) -> Units {
        Units {
            hbar: m.hbar.unwrap_or(self.units.hbar),
            ..self.units
        }
    }

    /// Builds the current source on `grid` (relativistic states are
    /// sampled on its conjugate momentum grid).
    pub fn build_source(
        &self,
        grid: &UniformGrid3,
    ) -> Result<Box<dyn CurrentSource>, ScenarioError> {
        let num = |what: &str| ScenarioError::numerical(format!("building {what} state"));
        Ok(match self.state()? {
            StateSpec::Schrodinger(s) => {
                let set = GaussianPacketSet::new(s.components, self.units, s.band_limit)
                    .map_err(num("schrodinger"))?;
                Box::new(SchrodingerSource::pure(set, UniformForce([0.0; 3])))
            }
            StateSpec::Forced(s) => {
                let set = GaussianPacketSet::new(s.components, self.units, s.band_limit)
                    .map_err(num("forced"))?;
                Box::new(SchrodingerSource::pure(set, UniformForce(s.force)))
            }
            StateSpec::Mixed(s) => {
                let members = s
                    .members
                    .iter()
                    .map(|m| {
                        let set = GaussianPacketSet::new(
                            m.components.clone(),
                            self.member_units(m),
                            m.band_limit,
                        )?;
                        Ok((m.weight, set))
                    })
                    .collect::<crate::Result<Vec<_>>>()
                    .map_err(num("mixed"))?;
                let mix = MixedState::new(members).map_err(num("mixed"))?;
                Box::new(SchrodingerSource::mixed(mix, UniformForce([0.0; 3])))
            }
            StateSpec::Kg(s) => {
                let state = KGState::from_gaussians(s.plus, s.minus, self.units, grid)
                    .map_err(num("Klein-Gordon"))?;
                Box::new(KgSource { state })
            }
            StateSpec::Dirac(s) => {
                let state = DiracState::from_components(s.components, self.units, grid)
                    .map_err(num("Dirac"))?;
                Box::new(DiracSource { state })
            }
            StateSpec::Newtonian(s) => Box::new(
                NewtonianEnsemble::new(s.members, self.units.charge, self.units.c)
                    .map_err(num("ensemble"))?,
            ),
        })
    }

    /// The ensemble, for closed-form moment checks.
    pub fn ensemble(&self) -> Result<Option<NewtonianEnsemble>, ScenarioError> {
        match self.state()? {
            StateSpec::Newtonian(s) => Ok(Some(
                NewtonianEnsemble::new(s.members, self.units.charge, self.units.c)
                    .map_err(ScenarioError::numerical("building ensemble"))?,
            )),
            _ => Ok(None),
        }
    }

    /// `F/m` for forced scenarios.
    pub fn acceleration(&self) -> Result<Option<Vec3>, ScenarioError> {
        match self.state()? {
            StateSpec::Forced(s) => Ok(Some(s.force.map(|f| f / self.units.mass))),
            _ => Ok(None),
        }
    }

    /// Normalized certification directions.
    pub fn directions(&self) -> Vec<Vec3> {
        self.observation
            .directions
            .iter()
            .filter_map(|d| normalized(*d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
id = "t"
model = "schrodinger"

[state]
components = [{ k_center = [0.1, 0.0, 0.0], sigma_k = [0.05, 0.05, 0.05] }]

[grid]
half_extent = [60.0, 60.0, 60.0]
spacing = [6.0, 6.0, 6.0]

[time]
dt = 2.0
n_samples = 17
"#;

    #[test]
    fn minimal_parses_and_round_trips() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.observation.max_order, 4);
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_model_is_schema_error() {
        let text = MINIMAL.replace("model = \"schrodinger\"", "");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Schema { message, .. }) => {
                assert!(message.contains("model"), "{message}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_error_has_path() {
        let text = MINIMAL.replace("sigma_k = [0.05, 0.05, 0.05]", "sigma_k = [0.05, 0.05]");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Schema { path, .. }) => {
                assert!(path.starts_with("state.components[0]"), "{path}")
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("spacing = [6.0", "spacingg = [6.0");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Schema { path, .. }) => assert!(path.starts_with("grid"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kg_branch_requirements() {
        let text = MINIMAL
            .replace("model = \"schrodinger\"", "model = \"kg_mixed\"")
            .replace("components = [", "plus = [");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Schema { path, .. }) => assert_eq!(path, "state.minus"),
            other => panic!("{other:?}"),
        }
    }
}
