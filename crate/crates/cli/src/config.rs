//! Experiment files.
//!
//! An experiment is a TOML document with five sections:
//!
//! ```toml
//! [lattice]
//! extent = [8]
//! boundary = "open"            # default "periodic"
//!
//! [model]
//! preset = "transverse_ising"
//! couplings = { J = 1.0, h = 1.0 }
//! # lambda defaults to ln 2
//!
//! [state]
//! kind = "gibbs"               # "tracial" (default), "gibbs", "product"
//! beta = 1.0
//!
//! [observables]
//! Z0 = "Z@(0)"
//! Z5 = "Z@(5)"
//!
//! [command]
//! name = "lr-certify"
//! pairs = [["Z0", "Z5"]]
//! times = { start = 0.0, stop = 1.0, num = 21 }
//! ```

use std::collections::BTreeMap;
use std::fmt;

use lr_ergo_core::algebra::{hilbert_dim, parse_complex};
use lr_ergo_core::certify::DEFAULT_LOCALIZATION_C;
use lr_ergo_core::ergodic::{
    QuadratureScheme, QuadratureSpec, RaySpec, SweepMode, DEFAULT_ORDER, DEFAULT_T_MIN,
};
use lr_ergo_core::model::DEFAULT_LAMBDA;
use lr_ergo_core::{
    dim_cap, Boundary, LocalOperator, ModelKind, ModelPreset, PauliString, RationalDirection, Site,
    Torus, C64,
};
use serde::{Deserialize, Serialize};

/// Every command accepted in `[command] name` and on the command line.
pub const COMMANDS: [&str; 10] = [
    "lr-certify",
    "localize",
    "ergodic-sweep",
    "oscillatory",
    "moments",
    "mean-square",
    "multi-point",
    "spacelike-probe",
    "kms-check",
    "hydro",
];

/// First problem found in an experiment file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// 1-based line, when the problem can be pinned to one.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }

    fn from_toml(text: &str, e: &toml::de::Error) -> Self {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        ConfigError {
            line,
            message: e.message().trim().to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Error naming the valid command set.
pub fn unknown_command(name: &str) -> ConfigError {
    ConfigError::new(format!(
        "unknown command {name:?}; expected one of: {}",
        COMMANDS.join(", ")
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub state: StateBlock,
    #[serde(default)]
    pub observables: BTreeMap<String, String>,
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub extent: Vec<usize>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "default_site_dim")]
    pub site_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub preset: ModelKind,
    #[serde(default)]
    pub couplings: BTreeMap<String, f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Terms of a `custom` preset in Pauli-string text form.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<String>,
    #[serde(default)]
    pub translation_covariant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateBlock {
    #[default]
    Tracial,
    Gibbs {
        beta: f64,
    },
    /// One amplitude vector for every site, or one per site.
    Product {
        vectors: Vec<Vec<Amplitude>>,
    },
}

/// A real number or a complex number written as text (`"0.6-0.8i"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Text(String),
}

impl Amplitude {
    pub fn value(&self) -> Option<C64> {
        match self {
            Amplitude::Real(x) => Some(C64::new(*x, 0.0)),
            Amplitude::Text(s) => parse_complex(s),
        }
    }
}

/// Explicit list of values or an evenly spaced range including both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Linspace),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) if r.num == 1 => vec![r.start],
            Grid::Range(r) => (0..r.num)
                .map(|i| {
                    if i + 1 == r.num {
                        r.stop
                    } else {
                        r.start + (r.stop - r.start) * i as f64 / (r.num - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureBlock {
    #[serde(default)]
    pub scheme: QuadratureScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
}

impl Default for QuadratureBlock {
    fn default() -> Self {
        QuadratureBlock {
            scheme: QuadratureScheme::BreakpointExact,
            dt: None,
            order: DEFAULT_ORDER,
        }
    }
}

impl QuadratureBlock {
    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            scheme: self.scheme,
            dt: self.dt,
            per_piece_order: self.order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    LrCertify(LrCertifyParams),
    Localize(LocalizeParams),
    ErgodicSweep(SweepParams),
    Oscillatory(OscillatoryParams),
    Moments(MomentParams),
    MeanSquare(MeanSquareParams),
    MultiPoint(MultiPointParams),
    SpacelikeProbe(SpacelikeParams),
    KmsCheck(KmsParams),
    Hydro(HydroParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrCertifyParams {
    pub pairs: Vec<(String, String)>,
    pub times: Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeParams {
    pub observable: String,
    pub t: f64,
    pub radii: Vec<u64>,
    #[serde(default = "default_c")]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<i64>>,
    pub v: Grid,
    #[serde(rename = "T")]
    pub horizons: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SweepMode>,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatoryParams {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<i64>>,
    pub v: f64,
    pub k: Vec<f64>,
    pub f: f64,
    #[serde(rename = "T")]
    pub horizons: Grid,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentParams {
    pub a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<i64>>,
    pub v: f64,
    #[serde(rename = "T")]
    pub horizons: Grid,
    pub n: Vec<u32>,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSquareParams {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<i64>>,
    pub v: f64,
    #[serde(rename = "T")]
    pub horizons: Grid,
    /// Horizon of the `B` average; equal to `T` when absent.
    #[serde(rename = "T_b", default, skip_serializing_if = "Option::is_none")]
    pub horizon_b: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiPointParams {
    pub a: Vec<String>,
    pub b: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<i64>>,
    pub v: f64,
    #[serde(rename = "T")]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacelikeParams {
    pub a: String,
    pub b: String,
    pub n: Vec<i64>,
    pub v: f64,
    pub m_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmsParams {
    /// Defaults to every ordered pair of observables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(String, String)>>,
    /// Defaults to the inverse temperature of a Gibbs state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_kms_tol")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroParams {
    pub a: String,
    pub b: String,
    pub kappa: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
    /// Optional structure-factor table over `k × times`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Grid>,
}

fn default_site_dim() -> usize {
    2
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_order() -> usize {
    DEFAULT_ORDER
}
fn default_c() -> f64 {
    DEFAULT_LOCALIZATION_C
}
fn default_kms_tol() -> f64 {
    1e-9
}
fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LrCertify(_) => "lr-certify",
            Command::Localize(_) => "localize",
            Command::ErgodicSweep(_) => "ergodic-sweep",
            Command::Oscillatory(_) => "oscillatory",
            Command::Moments(_) => "moments",
            Command::MeanSquare(_) => "mean-square",
            Command::MultiPoint(_) => "multi-point",
            Command::SpacelikeProbe(_) => "spacelike-probe",
            Command::KmsCheck(_) => "kms-check",
            Command::Hydro(_) => "hydro",
        }
    }

    /// Observable names the command refers to.
    pub fn references(&self) -> Vec<&str> {
        fn pair(p: &[(String, String)]) -> Vec<&str> {
            p.iter()
                .flat_map(|(a, b)| [a.as_str(), b.as_str()])
                .collect()
        }
        match self {
            Command::LrCertify(p) => pair(&p.pairs),
            Command::Localize(p) => vec![&p.observable],
            Command::ErgodicSweep(p) => vec![&p.a, &p.b],
            Command::Oscillatory(p) => vec![&p.a, &p.b],
            Command::Moments(p) => vec![&p.a],
            Command::MeanSquare(p) => vec![&p.a, &p.b],
            Command::MultiPoint(p) => p.a.iter().chain(&p.b).map(String::as_str).collect(),
            Command::SpacelikeProbe(p) => vec![&p.a, &p.b],
            Command::KmsCheck(p) => p.pairs.as_deref().map(pair).unwrap_or_default(),
            Command::Hydro(p) => vec![&p.a, &p.b],
        }
    }
}

/// A validation failure tied to a key, located in the text afterwards.
struct Issue {
    section: &'static str,
    key: String,
    message: String,
}

fn issue(section: &'static str, key: impl Into<String>, message: impl Into<String>) -> Issue {
    Issue {
        section,
        key: key.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn torus(&self) -> lr_ergo_core::Result<Torus> {
        Torus::new(self.lattice.extent.clone(), self.lattice.boundary)
    }

    pub fn preset(&self) -> lr_ergo_core::Result<ModelPreset> {
        let mut preset = if self.model.preset == ModelKind::Custom {
            let terms = self
                .model
                .terms
                .iter()
                .map(|t| t.parse())
                .collect::<lr_ergo_core::Result<Vec<PauliString>>>()?;
            ModelPreset::custom(terms, self.model.translation_covariant)
        } else {
            ModelPreset::new(self.model.preset)
        };
        for (k, v) in &self.model.couplings {
            preset = preset.coupling(k, *v);
        }
        Ok(preset)
    }

    /// Named observables as local operators.
    pub fn operators(&self) -> lr_ergo_core::Result<BTreeMap<String, LocalOperator>> {
        self.observables
            .iter()
            .map(|(name, text)| {
                let ps: PauliString = text.parse()?;
                Ok((name.clone(), ps.to_operator(self.lattice.site_dim)?))
            })
            .collect()
    }

    /// Product-state amplitude vectors.
    pub fn product_vectors(&self) -> Option<Vec<Vec<C64>>> {
        match &self.state {
            StateBlock::Product { vectors } => Some(
                vectors
                    .iter()
                    .map(|v| {
                        v.iter()
                            .map(|a| a.value().unwrap_or(C64::new(f64::NAN, 0.0)))
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Ray direction for a command; the first lattice axis by default.
    pub fn direction(&self, q: &Option<Vec<i64>>) -> lr_ergo_core::Result<RationalDirection> {
        let d = self.lattice.extent.len();
        let v = q
            .clone()
            .unwrap_or_else(|| Site::unit(d, 0).coords().to_vec());
        RationalDirection::new(Site::new(v))
    }

    /// Normalized TOML text; parsing it again gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs are representable in TOML")
    }

    fn validate(&self) -> Result<(), Issue> {
        let torus = self
            .torus()
            .map_err(|e| issue("lattice", "extent", e.to_string()))?;
        let n = self.lattice.site_dim;
        if n < 2 {
            return Err(issue(
                "lattice",
                "site_dim",
                format!("site_dim must be at least 2, got {n}"),
            ));
        }
        hilbert_dim(n, torus.num_sites(), dim_cap())
            .map_err(|e| issue("lattice", "extent", e.to_string()))?;

        if !(self.model.lambda > 0.0 && self.model.lambda.is_finite()) {
            return Err(issue(
                "model",
                "lambda",
                format!("lambda must be positive, got {}", self.model.lambda),
            ));
        }
        let preset = self
            .preset()
            .map_err(|e| issue("model", "terms", e.to_string()))?;
        preset
            .expand(&torus, n, self.model.lambda)
            .map_err(|e| issue("model", "preset", format!("{}: {e}", self.model.preset)))?;

        match &self.state {
            StateBlock::Tracial => {}
            StateBlock::Gibbs { beta } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(issue(
                        "state",
                        "beta",
                        format!("beta must be finite and non-negative, got {beta}"),
                    ));
                }
            }
            StateBlock::Product { vectors } => {
                if vectors.len() != 1 && vectors.len() != torus.num_sites() {
                    return Err(issue(
                        "state",
                        "vectors",
                        format!(
                            "expected 1 or {} vectors, got {}",
                            torus.num_sites(),
                            vectors.len()
                        ),
                    ));
                }
                for a in vectors.iter().flatten() {
                    if a.value().is_none() {
                        return Err(issue(
                            "state",
                            "vectors",
                            format!("invalid amplitude {a:?}"),
                        ));
                    }
                }
            }
        }

        for (name, text) in &self.observables {
            let ps: PauliString = text
                .parse()
                .map_err(|e: lr_ergo_core::Error| issue("observables", name, e.to_string()))?;
            let op = ps
                .to_operator(n)
                .map_err(|e| issue("observables", name, e.to_string()))?;
            if !torus.contains_region(op.support()) {
                return Err(issue(
                    "observables",
                    name,
                    format!("support {} lies outside the box", op.support()),
                ));
            }
        }
        for r in self.command.references() {
            if !self.observables.contains_key(r) {
                let known: Vec<&str> = self.observables.keys().map(String::as_str).collect();
                return Err(issue(
                    "command",
                    format!("\"{r}\""),
                    format!(
                        "unresolved observable {r:?}; defined: [{}]",
                        known.join(", ")
                    ),
                ));
            }
        }
        self.validate_command(&torus)
    }

    fn validate_command(&self, torus: &Torus) -> Result<(), Issue> {
        let d = torus.dim();
        let grid = |key: &'static str, g: &Grid| -> Result<Vec<f64>, Issue> {
            let v = g.values();
            if v.is_empty() {
                return Err(issue("command", key, format!("{key} grid is empty")));
            }
            if v.iter().any(|x| x.is_nan()) {
                return Err(issue("command", key, format!("{key} grid contains NaN")));
            }
            Ok(v)
        };
        let horizons = |key: &'static str, v: &[f64]| -> Result<(), Issue> {
            if v.is_empty() {
                return Err(issue("command", key, format!("{key} grid is empty")));
            }
            match v.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                Some(t) => Err(issue(
                    "command",
                    key,
                    format!("horizons must be positive and finite, got {t}"),
                )),
                None => Ok(()),
            }
        };
        let ray = |q: &Option<Vec<i64>>| -> Result<(), Issue> {
            self.direction(q)
                .map_err(|e| issue("command", "q", e.to_string()))?;
            if q.as_ref().is_some_and(|q| q.len() != d) {
                return Err(issue("command", "q", format!("q must have {d} components")));
            }
            Ok(())
        };
        let quad = |qb: &QuadratureBlock, ts: &[f64]| -> Result<(), Issue> {
            for &t in ts {
                qb.spec()
                    .validate(t)
                    .map_err(|e| issue("command", "quadrature", e.to_string()))?;
            }
            Ok(())
        };
        let vector = |key: &'static str, k: &[f64]| -> Result<(), Issue> {
            if k.len() != d {
                return Err(issue(
                    "command",
                    key,
                    format!("{key} must have {d} components, got {}", k.len()),
                ));
            }
            Ok(())
        };
        match &self.command {
            Command::LrCertify(p) => {
                if p.pairs.is_empty() {
                    return Err(issue("command", "pairs", "pairs list is empty"));
                }
                grid("times", &p.times)?;
            }
            Command::Localize(p) => {
                if p.radii.is_empty() {
                    return Err(issue("command", "radii", "radii list is empty"));
                }
                if !(p.c > 0.0) {
                    return Err(issue(
                        "command",
                        "c",
                        format!("c must be positive, got {}", p.c),
                    ));
                }
            }
            Command::ErgodicSweep(p) => {
                ray(&p.q)?;
                grid("v", &p.v)?;
                let ts = grid("T", &p.horizons)?;
                horizons("T", &ts)?;
                quad(&p.quadrature, &ts)?;
                if let Some(SweepMode::Oscillatory { k, .. }) = &p.mode {
                    vector("mode", k)?;
                }
            }
            Command::Oscillatory(p) => {
                ray(&p.q)?;
                vector("k", &p.k)?;
                let ts = grid("T", &p.horizons)?;
                horizons("T", &ts)?;
                quad(&p.quadrature, &ts)?;
            }
            Command::Moments(p) => {
                ray(&p.q)?;
                let ts = grid("T", &p.horizons)?;
                horizons("T", &ts)?;
                quad(&p.quadrature, &ts)?;
                if p.n.is_empty() || p.n.contains(&0) {
                    return Err(issue(
                        "command",
                        "n",
                        "n must be a non-empty list of positive integers",
                    ));
                }
            }
            Command::MeanSquare(p) => {
                ray(&p.q)?;
                let mut ts = grid("T", &p.horizons)?;
                ts.extend(p.horizon_b);
                horizons("T", &ts)?;
                quad(&p.quadrature, &ts)?;
            }
            Command::MultiPoint(p) => {
                ray(&p.q)?;
                if p.a.len() != p.b.len() + 1 {
                    return Err(issue(
                        "command",
                        "b",
                        format!(
                            "multi-point needs len(a) = len(b) + 1, got {} and {}",
                            p.a.len(),
                            p.b.len()
                        ),
                    ));
                }
                if p.horizons.len() != p.b.len() {
                    return Err(issue("command", "T", "T needs one horizon per B operator"));
                }
                horizons("T", &p.horizons)?;
                quad(&p.quadrature, &p.horizons)?;
            }
            Command::SpacelikeProbe(p) => {
                if p.n.len() != d {
                    return Err(issue("command", "n", format!("n must have {d} components")));
                }
                if p.m_max == 0 {
                    return Err(issue("command", "m_max", "m_max must be at least 1"));
                }
                if p.k.is_some() != p.f.is_some() {
                    return Err(issue(
                        "command",
                        "k",
                        "give both k and f for a phased probe, or neither",
                    ));
                }
                if let Some(k) = &p.k {
                    vector("k", k)?;
                }
            }
            Command::KmsCheck(p) => {
                if p.beta.is_none() && !matches!(self.state, StateBlock::Gibbs { .. }) {
                    return Err(issue(
                        "command",
                        "beta",
                        "kms-check needs beta or a gibbs state",
                    ));
                }
                if self.observables.is_empty() {
                    return Err(issue(
                        "observables",
                        "",
                        "kms-check needs at least one observable",
                    ));
                }
            }
            Command::Hydro(p) => {
                if p.kappa.is_empty() {
                    return Err(issue("command", "kappa", "kappa list is empty"));
                }
                for k in &p.kappa {
                    vector("kappa", k)?;
                }
                if !(p.t_min > 0.0 && p.horizon > p.t_min) {
                    return Err(issue(
                        "command",
                        "T",
                        format!(
                            "need 0 < t_min < T, got t_min = {} and T = {}",
                            p.t_min, p.horizon
                        ),
                    ));
                }
                if p.k.is_some() != p.times.is_some() {
                    return Err(issue(
                        "command",
                        "k",
                        "give both k and times for a structure-factor table, or neither",
                    ));
                }
                if let (Some(ks), Some(times)) = (&p.k, &p.times) {
                    for k in ks {
                        vector("k", k)?;
                    }
                    grid("times", times)?;
                }
            }
        }
        Ok(())
    }
}

/// Ray for the command parameters.
pub fn ray_spec(
    cfg: &ExperimentConfig,
    q: &Option<Vec<i64>>,
    v: f64,
) -> lr_ergo_core::Result<RaySpec> {
    Ok(RaySpec::new(cfg.direction(q)?, v))
}

/// Parses and validates an experiment file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::from_toml(text, &e))?;
    cfg.validate().map_err(|i| ConfigError {
        line: locate(text, i.section, &i.key),
        message: format!("[{}] {}", i.section, i.message),
    })?;
    Ok(cfg)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first occurrence of `key` inside `[section]`, falling back to
/// the section header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header.get_or_insert(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section && !key.is_empty() {
            let hit = if key.starts_with('"') {
                line.contains(key)
            } else {
                line.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            };
            if hit {
                return Some(i + 1);
            }
        }
    }
    header
}
