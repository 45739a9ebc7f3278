//! Heisenberg dynamics on a finite volume through one cached eigendecomposition.
//!
//! With `H = U diag(E) U*`, real-time evolution is
//! `τ_t(A) = U [e^{i(E_j−E_k)t} A'_{jk}] U*` and the imaginary-time map
//! `τ_{iβ}(B) = e^{−βH} B e^{βH}` is `U [e^{−β(E_j−E_k)} B'_{jk}] U*`, where
//! `X' = U* X U`.

use num_complex::Complex64 as C64;

use crate::algebra::{self, LocalOperator};
use crate::error::{Error, Result};
use crate::lattice::{Region, Site, Torus};
use crate::linalg::{self, CMat};
use crate::model::Interaction;

/// Self-adjointness tolerance accepted by [`EvolutionEngine::build`].
pub const HAMILTONIAN_HERMITICITY_TOL: f64 = 1e-10;

/// Largest admissible `|β| · (E_max − E_min)`.
pub const IMAGINARY_TIME_GUARD: f64 = 300.0;

/// Spectral cache of a full-volume Hamiltonian.
#[derive(Clone, Debug)]
pub struct EvolutionEngine {
    hamiltonian: LocalOperator,
    torus: Torus,
    eigenvalues: Vec<f64>,
    eigenvectors: CMat,
    eigenvectors_adj: CMat,
}

impl EvolutionEngine {
    /// Diagonalizes `h`, which must be self-adjoint and live inside `torus`.
    pub fn build(h: LocalOperator, torus: Torus) -> Result<Self> {
        if !torus.contains_region(h.support()) {
            return Err(Error::OutOfBox {
                site: h.support().to_string(),
                extent: torus.extent().to_vec(),
            });
        }
        algebra::hilbert_dim(h.site_dim(), h.support().len(), crate::dim_cap())?;
        let defect = h.hermiticity_defect();
        if defect > HAMILTONIAN_HERMITICITY_TOL {
            return Err(Error::NotSelfAdjoint { deviation: defect });
        }
        let sym = (h.matrix() + h.matrix().adjoint()).scale(0.5);
        let (eigenvalues, eigenvectors) = linalg::hermitian_eigh(&sym);
        if eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        let eigenvectors_adj = eigenvectors.adjoint();
        Ok(EvolutionEngine {
            hamiltonian: h,
            torus,
            eigenvalues,
            eigenvectors,
            eigenvectors_adj,
        })
    }

    /// Engine for the Hamiltonian of the whole box of `phi`.
    pub fn from_interaction(phi: &Interaction) -> Result<Self> {
        EvolutionEngine::build(phi.full_hamiltonian()?, phi.torus().clone())
    }

    pub fn hamiltonian(&self) -> &LocalOperator {
        &self.hamiltonian
    }

    pub fn volume(&self) -> &Region {
        self.hamiltonian.support()
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn site_dim(&self) -> usize {
        self.hamiltonian.site_dim()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMat {
        &self.eigenvectors
    }

    /// `E_max − E_min`.
    pub fn spectral_spread(&self) -> f64 {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    /// `‖U diag(E) U* − H‖` (Frobenius, an upper bound on the operator norm).
    pub fn reconstruction_error(&self) -> f64 {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&e| C64::new(e, 0.0)),
        ));
        (self.from_eigenbasis(&d) - self.hamiltonian.matrix()).norm()
    }

    /// `‖U*U − I‖` (Frobenius).
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        (linalg::matmul(&self.eigenvectors_adj, &self.eigenvectors) - CMat::identity(n, n)).norm()
    }

    /// Embeds `a` into the volume and returns its full matrix.
    pub fn lift(&self, a: &LocalOperator) -> Result<CMat> {
        if a.site_dim() != self.site_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.site_dim(),
                got: a.site_dim(),
            });
        }
        Ok(a.embed(self.volume())?.into_matrix())
    }

    /// `U* X U` for a full-volume matrix.
    pub fn to_eigenbasis(&self, x: &CMat) -> CMat {
        linalg::matmul(
            &self.eigenvectors_adj,
            &linalg::matmul(x, &self.eigenvectors),
        )
    }

    /// `U X U*` for an eigenbasis matrix.
    pub fn from_eigenbasis(&self, x: &CMat) -> CMat {
        linalg::matmul(
            &self.eigenvectors,
            &linalg::matmul(x, &self.eigenvectors_adj),
        )
    }

    /// `X'_{jk} e^{i(E_j−E_k)t}` for an eigenbasis matrix.
    pub fn rotate_eigenbasis(&self, x: &CMat, t: f64) -> CMat {
        let phases: Vec<C64> = self
            .eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, e * t))
            .collect();
        CMat::from_fn(x.nrows(), x.ncols(), |j, k| {
            x[(j, k)] * phases[j] * phases[k].conj()
        })
    }

    fn wrap(&self, m: CMat) -> LocalOperator {
        LocalOperator::new(self.volume().clone(), m, self.site_dim()).expect("volume-sized matrix")
    }

    /// `τ_t(A) = e^{itH} A e^{−itH}` on the full volume.
    pub fn evolve(&self, a: &LocalOperator, t: f64) -> Result<LocalOperator> {
        if t == 0.0 {
            // τ_0 is the identity map; skip the basis round trip
            return Ok(self.wrap(self.lift(a)?));
        }
        let ae = self.to_eigenbasis(&self.lift(a)?);
        Ok(self.wrap(self.from_eigenbasis(&self.rotate_eigenbasis(&ae, t))))
    }

    /// [`evolve`](Self::evolve) at each time, sharing one basis change.
    pub fn evolve_grid(&self, a: &LocalOperator, times: &[f64]) -> Result<Vec<LocalOperator>> {
        if times.is_empty() {
            return Ok(Vec::new());
        }
        let lifted = self.lift(a)?;
        let ae = self.to_eigenbasis(&lifted);
        Ok(times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    self.wrap(lifted.clone())
                } else {
                    self.wrap(self.from_eigenbasis(&self.rotate_eigenbasis(&ae, t)))
                }
            })
            .collect())
    }

    pub fn check_imaginary_guard(&self, beta: f64) -> Result<()> {
        let product = beta.abs() * self.spectral_spread();
        if !(product <= IMAGINARY_TIME_GUARD) {
            return Err(Error::OverflowGuard {
                product,
                limit: IMAGINARY_TIME_GUARD,
            });
        }
        Ok(())
    }

    /// `τ_{iβ}(B) = e^{−βH} B e^{βH}`. Not norm preserving.
    pub fn evolve_imaginary(&self, b: &LocalOperator, beta: f64) -> Result<LocalOperator> {
        self.check_imaginary_guard(beta)?;
        let be = self.to_eigenbasis(&self.lift(b)?);
        let e = &self.eigenvalues;
        let scaled = CMat::from_fn(be.nrows(), be.ncols(), |j, k| {
            be[(j, k)] * (-beta * (e[j] - e[k])).exp()
        });
        Ok(self.wrap(self.from_eigenbasis(&scaled)))
    }

    /// Space-time translate `ι_n τ_t(A)`.
    ///
    /// On periodic boxes this translates the evolved full-volume operator.
    /// Open boxes cannot host the translate of a full-volume operator; there
    /// the shift is applied first, `τ_t(ι_n A)`, which agrees with the
    /// infinite-volume object whenever `ι_n A` and its light cone stay away
    /// from the boundary.
    pub fn evolve_translated(&self, a: &LocalOperator, n: &Site, t: f64) -> Result<LocalOperator> {
        if self.torus.is_periodic() {
            self.evolve(a, t)?.translate(&self.torus, n)
        } else {
            let shifted = a.translate(&self.torus, n).map_err(|e| match e {
                Error::OutOfBox { site, .. } => Error::SafeWindowExceeded(format!(
                    "translate of {} by {n} leaves the open box at {site}",
                    a.support()
                )),
                other => other,
            })?;
            self.evolve(&shifted, t)
        }
    }
}
