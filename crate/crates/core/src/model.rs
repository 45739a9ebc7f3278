//! Interactions, their exponential decay norm and Hamiltonian assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, LocalOperator, PauliString};
use crate::error::{Error, Result};
use crate::lattice::{Region, Site, Torus};

/// Self-adjointness tolerance for interaction terms.
pub const TERM_HERMITICITY_TOL: f64 = 1e-12;

/// Default decay parameter `λ = ln 2`.
pub const DEFAULT_LAMBDA: f64 = std::f64::consts::LN_2;

/// Map from finite regions to self-adjoint local operators on a torus.
#[derive(Clone, Debug)]
pub struct Interaction {
    name: String,
    torus: Torus,
    site_dim: usize,
    decay_lambda: f64,
    terms: BTreeMap<Region, LocalOperator>,
}

impl Interaction {
    pub fn new(
        name: impl Into<String>,
        torus: Torus,
        site_dim: usize,
        decay_lambda: f64,
    ) -> Result<Self> {
        if !(decay_lambda > 0.0 && decay_lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "decay parameter must be positive, got {decay_lambda}"
            )));
        }
        if site_dim == 0 {
            return Err(Error::InvalidArgument(
                "site dimension must be positive".into(),
            ));
        }
        Ok(Interaction {
            name: name.into(),
            torus,
            site_dim,
            decay_lambda,
            terms: BTreeMap::new(),
        })
    }

    /// Adds `op` to `Φ(support(op))`, summing with any existing term on the
    /// same region.
    pub fn add_term(&mut self, op: LocalOperator) -> Result<()> {
        if op.site_dim() != self.site_dim {
            return Err(Error::DimensionMismatch {
                expected: self.site_dim,
                got: op.site_dim(),
            });
        }
        if op.support().is_empty() {
            return Err(Error::InvalidArgument(
                "interaction terms need a non-empty support".into(),
            ));
        }
        if !self.torus.contains_region(op.support()) {
            return Err(Error::OutOfBox {
                site: op.support().to_string(),
                extent: self.torus.extent().to_vec(),
            });
        }
        let defect = op.hermiticity_defect();
        if defect > TERM_HERMITICITY_TOL {
            return Err(Error::NotSelfAdjoint { deviation: defect });
        }
        let key = op.support().clone();
        let merged = match self.terms.remove(&key) {
            Some(prev) => prev.add(&op)?,
            None => op,
        };
        self.terms.insert(key, merged);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn decay_lambda(&self) -> f64 {
        self.decay_lambda
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Region, &LocalOperator)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Scales every coupling by `c`.
    pub fn scaled(&self, c: f64) -> Interaction {
        let mut out = self.clone();
        for op in out.terms.values_mut() {
            *op = op.scale(C64::new(c, 0.0));
        }
        out
    }

    /// Per-site sums `Σ_{X∋n} ‖Φ(X)‖ |X| N^{2|X|} e^{λ diam(X)}` in the
    /// lexicographic order of the box.
    pub fn site_norms(&self, lambda: f64) -> Vec<f64> {
        let n = self.site_dim as f64;
        let weights: Vec<(&Region, f64)> = self
            .terms
            .iter()
            .map(|(x, op)| {
                let size = x.len() as f64;
                let diam = self.torus.diam(x).expect("terms are non-empty") as f64;
                (
                    x,
                    op.norm() * size * n.powf(2.0 * size) * (lambda * diam).exp(),
                )
            })
            .collect();
        self.torus
            .all_sites()
            .iter()
            .map(|site| {
                weights
                    .iter()
                    .filter(|(x, _)| x.contains(site))
                    .map(|(_, w)| w)
                    .sum()
            })
            .collect()
    }

    /// `‖Φ‖_λ = max_n Σ_{X∋n} ‖Φ(X)‖ |X| N^{2|X|} e^{λ diam(X)}` over the box.
    pub fn interaction_norm(&self, lambda: f64) -> f64 {
        self.site_norms(lambda).into_iter().fold(0.0, f64::max)
    }

    /// Lieb-Robinson velocity `2 ‖Φ‖_λ / λ`.
    pub fn lr_velocity(&self, lambda: f64) -> f64 {
        lr_velocity_from_norm(self.interaction_norm(lambda), lambda)
    }

    /// `H_Λ = Σ_{X ⊆ Λ} Φ(X)` as an operator on `region`.
    pub fn hamiltonian(&self, region: &Region) -> Result<LocalOperator> {
        if !self.torus.contains_region(region) {
            return Err(Error::OutOfBox {
                site: region.to_string(),
                extent: self.torus.extent().to_vec(),
            });
        }
        algebra::hilbert_dim(self.site_dim, region.len(), crate::dim_cap())?;
        let mut h = LocalOperator::zero(region.clone(), self.site_dim);
        let mut acc = h.matrix().clone();
        for (x, op) in &self.terms {
            if x.is_subset(region) {
                acc += op.embed(region)?.matrix();
            }
        }
        h = LocalOperator::new(region.clone(), acc, self.site_dim)?;
        Ok(h)
    }

    /// Hamiltonian of the whole box.
    pub fn full_hamiltonian(&self) -> Result<LocalOperator> {
        self.hamiltonian(&self.torus.all_sites())
    }
}

pub fn lr_velocity_from_norm(norm: f64, lambda: f64) -> f64 {
    2.0 * norm / lambda
}

/// Right-hand side of the Lieb-Robinson bound
/// `4‖A‖‖B‖|Λ_A||Λ_B| N^{2|Λ_A|} exp(−λ(d − v_LR|t|))`.
#[allow(clippy::too_many_arguments)]
pub fn lr_bound_value(
    norm_a: f64,
    norm_b: f64,
    size_a: usize,
    size_b: usize,
    site_dim: usize,
    dist: f64,
    t: f64,
    lambda: f64,
    v_lr: f64,
) -> f64 {
    let prefactor = 4.0
        * norm_a
        * norm_b
        * size_a as f64
        * size_b as f64
        * (site_dim as f64).powf(2.0 * size_a as f64);
    if prefactor == 0.0 {
        return 0.0;
    }
    prefactor * (-lambda * (dist - v_lr * t.abs())).exp()
}

/// [`lr_bound_value`] for concrete operators, with the distance measured in
/// the torus metric.
pub fn lr_bound_rhs(
    torus: &Torus,
    a: &LocalOperator,
    b: &LocalOperator,
    t: f64,
    lambda: f64,
    v_lr: f64,
) -> Result<f64> {
    let dist = torus.dist(a.support(), b.support())?;
    Ok(lr_bound_value(
        a.norm(),
        b.norm(),
        a.support().len(),
        b.support().len(),
        a.site_dim(),
        dist as f64,
        t,
        lambda,
        v_lr,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ising,
    TransverseIsing,
    TiltedIsing,
    Heisenberg,
    Xy,
    Custom,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ising,
        ModelKind::TransverseIsing,
        ModelKind::TiltedIsing,
        ModelKind::Heisenberg,
        ModelKind::Xy,
        ModelKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ising => "ising",
            ModelKind::TransverseIsing => "transverse_ising",
            ModelKind::TiltedIsing => "tilted_ising",
            ModelKind::Heisenberg => "heisenberg",
            ModelKind::Xy => "xy",
            ModelKind::Custom => "custom",
        }
    }

    /// Coupling names accepted by the preset.
    pub fn coupling_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Ising => &["J", "h_z"],
            ModelKind::TransverseIsing => &["J", "h_x", "h"],
            ModelKind::TiltedIsing => &["J", "h_x", "h_z"],
            ModelKind::Heisenberg | ModelKind::Xy => &["J", "h_z"],
            ModelKind::Custom => &[],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::InvalidArgument(format!(
                    "unknown model kind {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Named nearest-neighbour spin-1/2 model, or an explicit list of terms.
///
/// Sign conventions:
/// * `ising`: `−J σᶻσᶻ − h_z σᶻ`
/// * `transverse_ising`: `−J σᶻσᶻ − h_x σˣ` (`h` is an alias of `h_x`)
/// * `tilted_ising`: `−J σᶻσᶻ − h_x σˣ − h_z σᶻ`
/// * `heisenberg`: `J (σˣσˣ + σʸσʸ + σᶻσᶻ) − h_z σᶻ`
/// * `xy`: `J (σˣσˣ + σʸσʸ) − h_z σᶻ`
///
/// Bonds join every site to its `+e_i` neighbour on each axis; on periodic
/// boxes the wrapped bond is included.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPreset {
    pub kind: ModelKind,
    pub couplings: BTreeMap<String, f64>,
    /// Terms of a `custom` model.
    pub custom_terms: Vec<PauliString>,
    /// Replicate custom terms at every translate inside the box.
    pub translation_covariant: bool,
}

impl ModelPreset {
    pub fn new(kind: ModelKind) -> Self {
        ModelPreset {
            kind,
            couplings: BTreeMap::new(),
            custom_terms: Vec::new(),
            translation_covariant: false,
        }
    }

    pub fn coupling(mut self, name: &str, value: f64) -> Self {
        self.couplings.insert(name.to_string(), value);
        self
    }

    pub fn transverse_ising(j: f64, h: f64) -> Self {
        ModelPreset::new(ModelKind::TransverseIsing)
            .coupling("J", j)
            .coupling("h_x", h)
    }

    pub fn tilted_ising(j: f64, hx: f64, hz: f64) -> Self {
        ModelPreset::new(ModelKind::TiltedIsing)
            .coupling("J", j)
            .coupling("h_x", hx)
            .coupling("h_z", hz)
    }

    pub fn ising(j: f64) -> Self {
        ModelPreset::new(ModelKind::Ising).coupling("J", j)
    }

    pub fn heisenberg(j: f64) -> Self {
        ModelPreset::new(ModelKind::Heisenberg).coupling("J", j)
    }

    pub fn xy(j: f64) -> Self {
        ModelPreset::new(ModelKind::Xy).coupling("J", j)
    }

    pub fn custom(terms: Vec<PauliString>, translation_covariant: bool) -> Self {
        ModelPreset {
            kind: ModelKind::Custom,
            couplings: BTreeMap::new(),
            custom_terms: terms,
            translation_covariant,
        }
    }

    fn get(&self, name: &str) -> f64 {
        self.couplings.get(name).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<()> {
        let allowed = self.kind.coupling_names();
        for name in self.couplings.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "coupling {name:?} is not used by {}; allowed: [{}]",
                    self.kind,
                    allowed.join(", ")
                )));
            }
        }
        if self.kind == ModelKind::TransverseIsing
            && self.couplings.contains_key("h")
            && self.couplings.contains_key("h_x")
        {
            return Err(Error::InvalidArgument(
                "give either h or h_x, not both".into(),
            ));
        }
        if self.kind != ModelKind::Custom && !self.custom_terms.is_empty() {
            return Err(Error::InvalidArgument(
                "explicit terms are only allowed for custom models".into(),
            ));
        }
        Ok(())
    }

    /// Whether every generated term set is invariant under box translations.
    pub fn is_translation_covariant(&self, torus: &Torus) -> bool {
        torus.is_periodic() && (self.kind != ModelKind::Custom || self.translation_covariant)
    }

    /// Expands the preset into explicit terms on `torus`.
    pub fn expand(&self, torus: &Torus, site_dim: usize, lambda: f64) -> Result<Interaction> {
        self.validate()?;
        let mut phi = Interaction::new(self.kind.as_str(), torus.clone(), site_dim, lambda)?;
        if self.kind == ModelKind::Custom {
            for term in &self.custom_terms {
                let op = term.to_operator(site_dim)?;
                if self.translation_covariant {
                    for shift in torus.all_sites().iter() {
                        match op.translate(torus, shift) {
                            Ok(t) => phi.add_term(t)?,
                            Err(Error::OutOfBox { .. }) => continue,
                            Err(e) => return Err(e),
                        }
                    }
                } else {
                    phi.add_term(op)?;
                }
            }
            return Ok(phi);
        }
        if site_dim != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: site_dim,
            });
        }
        let (x, y, z) = (algebra::pauli_x(), algebra::pauli_y(), algebra::pauli_z());
        let j = self.get("J");
        let hx = self.get("h_x") + self.get("h");
        let hz = self.get("h_z");
        let bond_ops: Vec<(f64, &nalgebra::DMatrix<C64>)> = match self.kind {
            ModelKind::Ising | ModelKind::TransverseIsing | ModelKind::TiltedIsing => {
                vec![(-j, &z)]
            }
            ModelKind::Heisenberg => vec![(j, &x), (j, &y), (j, &z)],
            ModelKind::Xy => vec![(j, &x), (j, &y)],
            ModelKind::Custom => unreachable!(),
        };
        let (field_x, field_z) = match self.kind {
            ModelKind::Ising => (0.0, -hz),
            ModelKind::TransverseIsing => (-hx, 0.0),
            ModelKind::TiltedIsing => (-hx, -hz),
            ModelKind::Heisenberg | ModelKind::Xy => (0.0, -hz),
            ModelKind::Custom => unreachable!(),
        };
        let d = torus.dim();
        for site in torus.all_sites().iter() {
            for axis in 0..d {
                if torus.extent()[axis] < 2 {
                    continue;
                }
                let Ok(nb) = torus.translate_site(site, &Site::unit(d, axis)) else {
                    continue;
                };
                for &(c, m) in &bond_ops {
                    if c == 0.0 {
                        continue;
                    }
                    let a = LocalOperator::single_site(site.clone(), m.clone())?;
                    let b = LocalOperator::single_site(nb.clone(), m.clone())?;
                    phi.add_term(a.compose(&b)?.scale(C64::new(c, 0.0)))?;
                }
            }
            let mut field = nalgebra::DMatrix::<C64>::zeros(2, 2);
            if field_x != 0.0 {
                field += x.map(|v| v * field_x);
            }
            if field_z != 0.0 {
                field += z.map(|v| v * field_z);
            }
            if field_x != 0.0 || field_z != 0.0 {
                phi.add_term(LocalOperator::single_site(site.clone(), field)?)?;
            }
        }
        Ok(phi)
    }
}
