//! Finite-volume numerics for quantum spin lattices.
//!
//! The crate realizes the quasi-local algebra of a spin lattice on a finite
//! torus (or open box) and provides everything needed to probe its dynamics
//! empirically:
//!
//! * [`lattice`]: sites, regions, the ℓ₁ metric, translations and ray geometry.
//! * [`algebra`]: dense local operators with explicit supports, embeddings,
//!   commutators, operator norms and the tracial conditional expectation.
//! * [`model`]: interactions, their exponential decay norm, the Lieb-Robinson
//!   velocity and Hamiltonian assembly.
//! * [`dynamics`]: a cached spectral decomposition giving real and imaginary
//!   time Heisenberg evolution.
//! * [`states`]: Gibbs, tracial and product states, expectations and KMS
//!   residuals.
//! * [`ergodic`]: ray averages (scalar, oscillatory, operator-valued), moments,
//!   mean-square and multi-point averages, space-like probes and the dynamical
//!   structure factor.
//! * [`certify`]: Lieb-Robinson certificates, localization curves and
//!   asymptotic-abelianness probes.

pub mod algebra;
pub mod certify;
pub mod dynamics;
pub mod ergodic;
mod error;
pub mod lattice;
pub(crate) mod linalg;
pub mod model;
pub mod quadrature;
pub mod states;

pub use num_complex::Complex64 as C64;

pub use algebra::{LocalOperator, PauliString, SiteMatrix};
pub use certify::{AbelianRow, LocalizationReport, LrCertificate, LrRow};
pub use dynamics::EvolutionEngine;
pub use ergodic::{AverageResult, QuadratureScheme, QuadratureSpec, RaySpec};
pub use error::{Error, Result};
pub use lattice::{Boundary, RationalDirection, Region, Site, Torus};
pub use linalg::CMat;
pub use model::{Interaction, ModelKind, ModelPreset};
pub use states::State;

/// Hilbert-space dimension cap used when no override is present.
pub const DEFAULT_DIM_CAP: usize = 1 << 14;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "LR_ERGO_DIM_CAP";

/// Current Hilbert-space dimension cap (`LR_ERGO_DIM_CAP` or the default).
pub fn dim_cap() -> usize {
    std::env::var(DIM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DIM_CAP)
}
