//! States as density matrices on the full volume.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::algebra::LocalOperator;
use crate::dynamics::EvolutionEngine;
use crate::error::{Error, Result};
use crate::lattice::{Region, Site};
use crate::linalg::{self, CMat};

/// Tolerance on hermiticity, normalization and positivity of a density matrix.
pub const STATE_TOL: f64 = 1e-10;

/// Positive, normalized functional `ω(A) = tr(ρA)`.
#[derive(Clone, Debug)]
pub struct State {
    rho: CMat,
    volume: Region,
    site_dim: usize,
    beta: Option<f64>,
    label: String,
}

impl State {
    /// Validates `rho` as a density matrix on `volume`.
    pub fn from_density_matrix(
        volume: Region,
        site_dim: usize,
        rho: CMat,
        label: impl Into<String>,
    ) -> Result<Self> {
        let expected = site_dim.pow(volume.len() as u32);
        if rho.nrows() != expected || rho.ncols() != expected {
            return Err(Error::InvalidArgument(format!(
                "density matrix is {}x{}, volume needs {expected}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let herm = linalg::hermiticity_defect(&rho);
        if herm > STATE_TOL {
            return Err(Error::NotSelfAdjoint { deviation: herm });
        }
        let tr = rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix has trace {tr}"
            )));
        }
        let min_eig = linalg::hermitian_eigenvalues(&rho)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -STATE_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix has eigenvalue {min_eig}"
            )));
        }
        Ok(State {
            rho,
            volume,
            site_dim,
            beta: None,
            label: label.into(),
        })
    }

    /// Finite-volume KMS state `e^{−βH}/Z`.
    pub fn gibbs(eng: &EvolutionEngine, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inverse temperature must be non-negative, got {beta}"
            )));
        }
        eng.check_imaginary_guard(beta)?;
        let e = eng.eigenvalues();
        let e0 = e.first().copied().unwrap_or(0.0);
        let weights: Vec<f64> = e.iter().map(|&x| (-beta * (x - e0)).exp()).collect();
        let z: f64 = weights.iter().sum();
        let diag = CMat::from_diagonal(&DVector::from_iterator(
            weights.len(),
            weights.iter().map(|w| C64::new(w / z, 0.0)),
        ));
        let mut rho = eng.from_eigenbasis(&diag);
        symmetrize(&mut rho);
        Ok(State {
            rho,
            volume: eng.volume().clone(),
            site_dim: eng.site_dim(),
            beta: Some(beta),
            label: format!("gibbs(beta={beta})"),
        })
    }

    /// Normalized trace, `ρ = I/dim`.
    pub fn tracial(volume: Region, site_dim: usize) -> Self {
        let d = site_dim.pow(volume.len() as u32);
        let rho = CMat::identity(d, d).map(|z| z / d as f64);
        State {
            rho,
            volume,
            site_dim,
            beta: Some(0.0),
            label: "tracial".into(),
        }
    }

    /// Pure product state `⊗_x |ψ_x⟩⟨ψ_x|`. A single vector is used on every
    /// site; otherwise one vector per site in lexicographic order.
    pub fn product(volume: Region, site_dim: usize, vectors: &[Vec<C64>]) -> Result<Self> {
        if vectors.is_empty() || (vectors.len() != 1 && vectors.len() != volume.len()) {
            return Err(Error::InvalidArgument(format!(
                "product state needs 1 or {} site vectors, got {}",
                volume.len(),
                vectors.len()
            )));
        }
        let mut psi = DVector::from_element(1, C64::new(1.0, 0.0));
        for k in 0..volume.len() {
            let v = &vectors[if vectors.len() == 1 { 0 } else { k }];
            if v.len() != site_dim {
                return Err(Error::DimensionMismatch {
                    expected: site_dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidArgument(
                    "product state vector is zero".into(),
                ));
            }
            let site_vec = DVector::from_iterator(site_dim, v.iter().map(|z| z / norm));
            psi = psi.kronecker(&site_vec);
        }
        let rho = &psi * psi.adjoint();
        Ok(State {
            rho,
            volume,
            site_dim,
            beta: None,
            label: "product".into(),
        })
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn volume(&self) -> &Region {
        &self.volume
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_tracial(&self) -> bool {
        self.label == "tracial"
    }

    /// Unnormalized partial trace of `ρ` onto `region`.
    pub fn reduced_density(&self, region: &Region) -> Result<CMat> {
        let full = LocalOperator::new(self.volume.clone(), self.rho.clone(), self.site_dim)?;
        let rest = self.volume.len() - region.len();
        let scale = (self.site_dim as f64).powi(rest as i32);
        Ok(full.reduce_to(region)?.into_matrix().map(|z| z * scale))
    }

    /// `ω(A) = tr(ρA)`, with `A` embedded into the volume.
    pub fn expect(&self, a: &LocalOperator) -> Result<C64> {
        if a.site_dim() != self.site_dim {
            return Err(Error::DimensionMismatch {
                expected: self.site_dim,
                got: a.site_dim(),
            });
        }
        if !a.support().is_subset(&self.volume) {
            return Err(Error::SupportNotContained {
                support: a.support().to_string(),
                region: self.volume.to_string(),
            });
        }
        if let Some(c) = a.as_scalar() {
            return Ok(c);
        }
        if a.support() == &self.volume {
            return Ok(linalg::trace_product(&self.rho, a.matrix()));
        }
        let reduced = self.reduced_density(a.support())?;
        Ok(linalg::trace_product(&reduced, a.matrix()))
    }

    /// `tr(ρX)` for a full-volume matrix.
    pub fn expect_matrix(&self, x: &CMat) -> C64 {
        linalg::trace_product(&self.rho, x)
    }
}

fn symmetrize(m: &mut CMat) {
    let h = (&*m + m.adjoint()).scale(0.5);
    *m = h;
}

/// `ω(ι_n τ_t(A) B) − ω(A)ω(B)`.
pub fn connected_correlator(
    s: &State,
    eng: &EvolutionEngine,
    a: &LocalOperator,
    b: &LocalOperator,
    n: &Site,
    t: f64,
) -> Result<C64> {
    if a.as_scalar().is_some() || b.as_scalar().is_some() {
        return Ok(C64::new(0.0, 0.0));
    }
    let moved = eng.evolve_translated(a, n, t)?;
    Ok(s.expect(&moved.compose(b)?)? - s.expect(a)? * s.expect(b)?)
}

/// `|ω(A τ_{iβ}(B)) − ω(BA)|`.
pub fn kms_residual(
    s: &State,
    eng: &EvolutionEngine,
    a: &LocalOperator,
    b: &LocalOperator,
    beta: f64,
) -> Result<f64> {
    let b_shifted = eng.evolve_imaginary(b, beta)?;
    let lhs = s.expect(&a.compose(&b_shifted)?)?;
    let rhs = s.expect(&b.compose(a)?)?;
    Ok((lhs - rhs).norm())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// `max |ω(ι_n A) − ω(A)|`; `None` when the box is not periodic.
    pub space: Option<f64>,
    /// `max |ω(τ_t A) − ω(A)|`.
    pub time: f64,
}

/// Largest deviations of `ω` under the sampled space and time translations.
pub fn invariance_check(
    s: &State,
    eng: &EvolutionEngine,
    ops: &[LocalOperator],
    times: &[f64],
    shifts: &[Site],
) -> Result<InvarianceReport> {
    let torus = eng.torus();
    let mut report = InvarianceReport {
        space: torus.is_periodic().then_some(0.0),
        time: 0.0,
    };
    for a in ops {
        let base = s.expect(a)?;
        for &t in times {
            let dev = (s.expect(&eng.evolve(a, t)?)? - base).norm();
            report.time = report.time.max(dev);
        }
        if let Some(space) = report.space.as_mut() {
            for n in shifts {
                let dev = (s.expect(&a.translate(torus, n)?)? - base).norm();
                *space = space.max(dev);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{pauli_x, pauli_z};
    use crate::lattice::Torus;
    use crate::model::ModelPreset;

    fn op(site: i64, m: CMat) -> LocalOperator {
        LocalOperator::single_site(Site::from(site), m).unwrap()
    }

    #[test]
    fn gibbs_at_zero_beta_is_tracial() {
        let phi = ModelPreset::transverse_ising(1.0, 0.7)
            .expand(&Torus::periodic([3]), 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let g = State::gibbs(&eng, 0.0).unwrap();
        let t = State::tracial(eng.volume().clone(), 2);
        assert!((g.rho() - t.rho()).norm() < 1e-14);
    }

    #[test]
    fn single_site_field_magnetization() {
        // H = −h σ^x with h = 1, β = 1: ω(σ^x) = tanh(1)
        let h = op(0, pauli_x().map(|z| -z));
        let eng = EvolutionEngine::build(h, Torus::open([1])).unwrap();
        let g = State::gibbs(&eng, 1.0).unwrap();
        let m = g.expect(&op(0, pauli_x())).unwrap();
        assert!((m.re - 1f64.tanh()).abs() < 1e-14);
        assert!((m.re - 0.76159).abs() < 1e-5);
        assert!(m.im.abs() < 1e-15);
    }

    #[test]
    fn low_temperature_ising_projects_on_ground_space() {
        let phi = ModelPreset::ising(1.0)
            .expand(&Torus::open([2]), 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let g = State::gibbs(&eng, 50.0).unwrap();
        // ground space of −σ^zσ^z: |00⟩, |11⟩
        let mut proj = CMat::zeros(4, 4);
        proj[(0, 0)] = C64::new(0.5, 0.0);
        proj[(3, 3)] = C64::new(0.5, 0.0);
        assert!((g.rho() - proj).norm() < 1e-6);
    }

    #[test]
    fn two_site_ising_zz_correlation() {
        // oracle: direct 4×4 trace of e^{βσzσz}σzσz / tr e^{βσzσz} = tanh β
        let phi = ModelPreset::ising(1.0)
            .expand(&Torus::open([2]), 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let g = State::gibbs(&eng, 1.0).unwrap();
        let zz = op(0, pauli_z()).compose(&op(1, pauli_z())).unwrap();
        let weights = [1f64.exp(), (-1f64).exp(), (-1f64).exp(), 1f64.exp()];
        let signs = [1.0, -1.0, -1.0, 1.0];
        let z: f64 = weights.iter().sum();
        let oracle: f64 = weights.iter().zip(signs).map(|(w, s)| w * s).sum::<f64>() / z;
        let got = g.expect(&zz).unwrap();
        assert!((got.re - oracle).abs() < 1e-14);
        assert!((got.re - 1f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn tracial_examples() {
        let vol = Region::chain([0, 1, 2]);
        let t = State::tracial(vol.clone(), 2);
        assert!(
            (t.expect(&LocalOperator::identity(vol, 2)).unwrap() - C64::new(1.0, 0.0)).norm()
                < 1e-15
        );
        assert_eq!(t.expect(&op(2, pauli_z())).unwrap().norm(), 0.0);
        let zz = op(0, pauli_z()).compose(&op(1, pauli_z())).unwrap();
        assert!(t.expect(&zz).unwrap().norm() < 1e-15);
        let a = op(0, pauli_x()).add(&op(1, pauli_z())).unwrap();
        let b = op(0, pauli_z()).compose(&op(2, pauli_x())).unwrap();
        let ab = t.expect(&a.compose(&b).unwrap()).unwrap();
        let ba = t.expect(&b.compose(&a).unwrap()).unwrap();
        assert!((ab - ba).norm() < 1e-15);
    }

    #[test]
    fn product_state() {
        let vol = Region::chain([0, 1]);
        let up = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let plus = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let s = State::product(vol.clone(), 2, &[up, plus]).unwrap();
        assert!((s.expect(&op(0, pauli_z())).unwrap().re - 1.0).abs() < 1e-15);
        assert!((s.expect(&op(1, pauli_x())).unwrap().re - 1.0).abs() < 1e-15);
        assert!(State::product(vol, 2, &[]).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let vol = Region::chain([0]);
        assert!(State::from_density_matrix(vol.clone(), 2, CMat::identity(2, 2), "bad").is_err());
        let mut neg = CMat::zeros(2, 2);
        neg[(0, 0)] = C64::new(1.5, 0.0);
        neg[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(State::from_density_matrix(vol.clone(), 2, neg, "neg").is_err());
        let ok = CMat::identity(2, 2).map(|z| z * 0.5);
        assert!(State::from_density_matrix(vol, 2, ok, "ok").is_ok());
    }

    #[test]
    fn connected_correlator_examples() {
        let torus = Torus::periodic([4]);
        let phi = ModelPreset::tilted_ising(1.0, 1.05, 0.5)
            .expand(&torus, 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let g = State::gibbs(&eng, 0.7).unwrap();
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let b = op(1, pauli_z());
        assert_eq!(
            connected_correlator(&g, &eng, &id, &b, &Site::from(1), 0.9).unwrap(),
            C64::new(0.0, 0.0)
        );
        let c = connected_correlator(&g, &eng, &b, &id, &Site::from(2), 0.4).unwrap();
        assert!(c.norm() < 1e-15);
        let t = State::tracial(eng.volume().clone(), 2);
        let v = connected_correlator(
            &t,
            &eng,
            &op(0, pauli_z()),
            &op(0, pauli_x()),
            &Site::from(2),
            0.0,
        )
        .unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn kms_residual_examples() {
        let phi = ModelPreset::transverse_ising(1.0, 0.8)
            .expand(&Torus::open([2]), 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let a = op(0, pauli_x());
        let b = op(1, pauli_x()).add(&op(0, pauli_z())).unwrap();
        let g = State::gibbs(&eng, 0.9).unwrap();
        assert!(kms_residual(&g, &eng, &a, &b, 0.9).unwrap() <= 1e-12);
        let t = State::tracial(eng.volume().clone(), 2);
        // direct trace oracle: tr(A e^{−βH} B e^{βH}) ≠ tr(BA) for this pair
        let h = eng.hamiltonian().matrix().clone();
        let (vals, u) = linalg::hermitian_eigh(&h);
        let expm = |s: f64| {
            let d = CMat::from_diagonal(&DVector::from_iterator(
                4,
                vals.iter().map(|&e| C64::new((s * e).exp(), 0.0)),
            ));
            &u * d * u.adjoint()
        };
        let am = a.embed(eng.volume()).unwrap().into_matrix();
        let bm = b.embed(eng.volume()).unwrap().into_matrix();
        let lhs = (&am * expm(-0.9) * &bm * expm(0.9)).trace() / 4.0;
        let rhs = (&bm * &am).trace() / 4.0;
        let oracle = (lhs - rhs).norm();
        let got = kms_residual(&t, &eng, &a, &b, 0.9).unwrap();
        assert!(oracle > 1e-3);
        assert!((got - oracle).abs() < 1e-12);
        assert!(kms_residual(&t, &eng, &a, &b, 0.0).unwrap() < 1e-15);
    }

    #[test]
    fn invariance_examples() {
        let torus = Torus::periodic([4]);
        let phi = ModelPreset::tilted_ising(1.0, 1.05, 0.5)
            .expand(&torus, 2, 1.0)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let ops = vec![
            op(0, pauli_z()),
            op(1, pauli_x()).compose(&op(2, pauli_z())).unwrap(),
        ];
        let shifts: Vec<Site> = (1..4).map(Site::from).collect();
        let times = [0.5, 1.3, 4.0];
        let g = State::gibbs(&eng, 0.6).unwrap();
        let r = invariance_check(&g, &eng, &ops, &times, &shifts).unwrap();
        assert!(r.time <= 1e-9);
        assert!(r.space.unwrap() <= 1e-9);
        let t = State::tracial(eng.volume().clone(), 2);
        let r = invariance_check(&t, &eng, &ops, &times, &shifts).unwrap();
        assert!(r.time <= 1e-12 && r.space.unwrap() <= 1e-12);
    }
}
