//! Lieb-Robinson certificates, localization of evolved observables and
//! asymptotic-abelianness probes.
//!
//! On open boxes a row is boundary-affected once the light cone reaches the
//! edge, `v_LR·|t| > dist(Λ_A ∪ Λ_B, ∂)`. On periodic boxes the same rule is
//! applied with half the smallest extent as the distance to the wrap. Affected
//! rows are evaluated and reported but do not decide pass or fail.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::LocalOperator;
use crate::dynamics::EvolutionEngine;
use crate::error::{Error, Result};
use crate::lattice::{Region, Site, Torus};
use crate::model::{lr_bound_value, Interaction};

/// Slack on the Lieb-Robinson inequality.
pub const LR_SLACK: f64 = 1e-10;

/// Default constant in the localization error `ε_r`.
pub const DEFAULT_LOCALIZATION_C: f64 = 4.0;

/// `(t, ‖[τ_t(A), B]‖)` for each time.
pub fn commutator_norm_curve(
    eng: &EvolutionEngine,
    a: &LocalOperator,
    b: &LocalOperator,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    times
        .par_iter()
        .map(|&t| Ok((t, eng.evolve(a, t)?.commutator(b)?.norm())))
        .collect()
}

/// Distance from `x` to where finite-volume effects begin.
fn edge_distance(torus: &Torus, x: &Region) -> f64 {
    match torus.distance_to_boundary(x) {
        Some(d) => d as f64,
        None => torus.extent().iter().copied().min().unwrap_or(0) as f64 / 2.0,
    }
}

/// Whether the light cone of `A ∪ B` has reached the boundary (or wrapped).
pub fn boundary_affected(
    torus: &Torus,
    a: &LocalOperator,
    b: &LocalOperator,
    t: f64,
    v_lr: f64,
) -> bool {
    v_lr * t.abs() > edge_distance(torus, &a.support().union(b.support()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrRow {
    pub a: String,
    pub b: String,
    pub dist: u64,
    pub t: f64,
    pub empirical_norm: f64,
    pub bound_rhs: f64,
    pub satisfied: bool,
    /// `bound_rhs − empirical_norm`.
    pub margin: f64,
    pub boundary_affected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrCertificate {
    pub model: String,
    pub lambda: f64,
    pub interaction_norm: f64,
    pub v_lr: f64,
    pub rows: Vec<LrRow>,
}

impl LrCertificate {
    /// Rows that violate the bound and are not boundary-affected.
    pub fn violations(&self) -> Vec<&LrRow> {
        self.rows
            .iter()
            .filter(|r| !r.satisfied && !r.boundary_affected)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn counted_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.boundary_affected).count()
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "model {}  lambda {:.6}  |Phi| {:.6}  v_LR {:.6}\n",
            self.model, self.lambda, self.interaction_norm, self.v_lr
        );
        out.push_str(&format!(
            "{:<12} {:<12} {:>5} {:>10} {:>14} {:>14} {:>14} {:>4} {:>8}\n",
            "A", "B", "dist", "t", "empirical", "bound", "margin", "ok", "boundary"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<12} {:>5} {:>10.6} {:>14.6e} {:>14.6e} {:>14.6e} {:>4} {:>8}\n",
                r.a,
                r.b,
                r.dist,
                r.t,
                r.empirical_norm,
                r.bound_rhs,
                r.margin,
                if r.satisfied { "yes" } else { "NO" },
                if r.boundary_affected { "yes" } else { "no" }
            ));
        }
        out
    }
}

/// A named operator pair for [`certify_lr`].
#[derive(Clone, Debug)]
pub struct NamedPair {
    pub a_name: String,
    pub a: LocalOperator,
    pub b_name: String,
    pub b: LocalOperator,
}

impl NamedPair {
    pub fn new(
        a_name: impl Into<String>,
        a: LocalOperator,
        b_name: impl Into<String>,
        b: LocalOperator,
    ) -> Self {
        NamedPair {
            a_name: a_name.into(),
            a,
            b_name: b_name.into(),
            b,
        }
    }
}

/// Evaluates both sides of the Lieb-Robinson inequality on every
/// `(pair, time)` row, pairs outermost.
pub fn certify_lr(
    eng: &EvolutionEngine,
    phi: &Interaction,
    lambda: f64,
    pairs: &[NamedPair],
    times: &[f64],
) -> Result<LrCertificate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "decay rate must be positive, got {lambda}"
        )));
    }
    let norm = phi.interaction_norm(lambda);
    let v_lr = phi.lr_velocity(lambda);
    let torus = eng.torus();
    let mut rows = Vec::with_capacity(pairs.len() * times.len());
    for p in pairs {
        let dist = torus.dist(p.a.support(), p.b.support())?;
        let (na, nb) = (p.a.norm(), p.b.norm());
        let curve = commutator_norm_curve(eng, &p.a, &p.b, times)?;
        for (t, empirical) in curve {
            let rhs = lr_bound_value(
                na,
                nb,
                p.a.support().len(),
                p.b.support().len(),
                p.a.site_dim(),
                dist as f64,
                t,
                lambda,
                v_lr,
            );
            rows.push(LrRow {
                a: p.a_name.clone(),
                b: p.b_name.clone(),
                dist,
                t,
                empirical_norm: empirical,
                bound_rhs: rhs,
                satisfied: empirical <= rhs + LR_SLACK,
                margin: rhs - empirical,
                boundary_affected: boundary_affected(torus, &p.a, &p.b, t, v_lr),
            });
        }
    }
    Ok(LrCertificate {
        model: phi.name().to_string(),
        lambda,
        interaction_norm: norm,
        v_lr,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationRow {
    pub r: u64,
    pub t: f64,
    /// `‖ℙ_{Λ_r}(τ_t A) − τ_t A‖`.
    pub empirical_error: f64,
    /// `2 ε_r ‖A‖` with `ε_r = C|Λ|N^{2|Λ|} e^{−λ(r − v_LR|t|)}`.
    pub theoretical: f64,
    pub c: f64,
    /// Sites in `Λ_r` (clipped to the box).
    pub region_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub lambda: f64,
    pub v_lr: f64,
    pub c: f64,
    pub rows: Vec<LocalizationRow>,
}

impl LocalizationReport {
    /// Empirical errors nonincreasing in `r` within `tol`, rows taken in
    /// increasing `r`.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        let mut rows: Vec<&LocalizationRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.r);
        rows.windows(2)
            .all(|w| w[1].empirical_error <= w[0].empirical_error + tol)
    }
}

/// Distance of `τ_t(A)` from the algebra of the ball `Λ_r` around its
/// support, for each radius.
pub fn localization_curve(
    eng: &EvolutionEngine,
    a: &LocalOperator,
    t: f64,
    r_list: &[u64],
    c: f64,
    lambda: f64,
    v_lr: f64,
) -> Result<LocalizationReport> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "localization constant C must be positive, got {c}"
        )));
    }
    let torus = eng.torus();
    if !torus.contains_region(a.support()) {
        return Err(Error::OutOfBox {
            site: a.support().to_string(),
            extent: torus.extent().to_vec(),
        });
    }
    let evolved = eng.evolve(a, t)?;
    let norm_a = a.norm();
    let size = a.support().len();
    let prefactor = c * size as f64 * (a.site_dim() as f64).powf(2.0 * size as f64);
    let rows = r_list
        .par_iter()
        .map(|&r| {
            let region = torus.ball_extension(a.support(), r);
            let local = evolved.localize(&region)?;
            let err = local.sub(&evolved)?.norm();
            let eps = prefactor * (-lambda * (r as f64 - v_lr * t.abs())).exp();
            Ok(LocalizationRow {
                r,
                t,
                empirical_error: err,
                theoretical: 2.0 * eps * norm_a,
                c,
                region_size: region.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizationReport {
        lambda,
        v_lr,
        c,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbelianRow {
    pub r: u64,
    pub t: f64,
    pub dist: u64,
    /// `‖[ι_{rn} τ_{r|n|/v}(A), B]‖`.
    pub norm: f64,
    /// Lieb-Robinson right-hand side for the same row.
    pub rhs: f64,
}

/// `‖[ι_{rn} τ_{r|n|/v}(A), B]‖` for `r = 1..r_max`. An infinite `v` puts
/// every row at time zero.
pub fn abelianness_probe(
    eng: &EvolutionEngine,
    a: &LocalOperator,
    b: &LocalOperator,
    n: &Site,
    v: f64,
    r_max: u64,
    lambda: f64,
    v_lr: f64,
) -> Result<Vec<AbelianRow>> {
    let torus = eng.torus();
    if n.dim() != torus.dim() {
        return Err(Error::LatticeDimMismatch {
            expected: torus.dim(),
            got: n.dim(),
        });
    }
    if n.is_zero() {
        return Err(Error::InvalidArgument(
            "probe direction must be non-zero".into(),
        ));
    }
    if v == 0.0 || v.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "probe speed must be non-zero, got {v}"
        )));
    }
    if torus.is_periodic() && !torus.within_half_extent(&n.scale(r_max as i64)) {
        return Err(Error::WrapGuard(format!(
            "{r_max}·{n} exceeds half the periodic extent {:?}",
            torus.extent()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    (1..=r_max)
        .into_par_iter()
        .map(|r| {
            let shift = n.scale(r as i64);
            let t = r as f64 * n.l1_norm() as f64 / v;
            let t = if t.is_finite() { t } else { 0.0 };
            let moved = torus.translate(a.support(), &shift)?;
            let dist = torus.dist(&moved, b.support())?;
            let norm = eng.evolve_translated(a, &shift, t)?.commutator(b)?.norm();
            let rhs = lr_bound_value(
                na,
                nb,
                a.support().len(),
                b.support().len(),
                a.site_dim(),
                dist as f64,
                t,
                lambda,
                v_lr,
            );
            Ok(AbelianRow {
                r,
                t,
                dist,
                norm,
                rhs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{pauli_x, pauli_y, pauli_z};
    use crate::linalg::CMat;
    use crate::model::{ModelPreset, DEFAULT_LAMBDA};
    use num_complex::Complex64 as C64;

    fn op(site: i64, m: CMat) -> LocalOperator {
        LocalOperator::single_site(Site::from(site), m).unwrap()
    }

    fn ising_chain(l: usize) -> (Interaction, EvolutionEngine) {
        let phi = ModelPreset::transverse_ising(1.0, 1.0)
            .expand(&Torus::open([l]), 2, DEFAULT_LAMBDA)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        (phi, eng)
    }

    #[test]
    fn curve_examples() {
        let (_, eng) = ising_chain(4);
        let curve =
            commutator_norm_curve(&eng, &op(0, pauli_z()), &op(2, pauli_x()), &[0.0]).unwrap();
        assert_eq!(curve[0].1, 0.0);
        let id = LocalOperator::identity(Region::chain([1]), 2);
        for (_, n) in commutator_norm_curve(&eng, &op(0, pauli_z()), &id, &[0.0, 0.5, 1.0]).unwrap()
        {
            assert!(n < 1e-12);
        }
    }

    #[test]
    fn single_site_curve_matches_oracle() {
        // H = σ^z: τ_t(σ^x) = cos2t σ^x − sin2t σ^y, and
        // [τ_t(σ^x), σ^z] = −2i cos2t σ^y − 2i sin2t σ^x has norm 2.
        let eng = EvolutionEngine::build(op(0, pauli_z()), Torus::open([1])).unwrap();
        let times: Vec<f64> = (0..8).map(|i| 0.2 * i as f64).collect();
        let curve =
            commutator_norm_curve(&eng, &op(0, pauli_x()), &op(0, pauli_z()), &times).unwrap();
        for (t, n) in curve {
            let (c, s) = ((2.0 * t).cos(), (2.0 * t).sin());
            let m = pauli_y().map(|z| z * C64::new(0.0, -2.0 * c))
                + pauli_x().map(|z| z * C64::new(0.0, -2.0 * s));
            let oracle = crate::linalg::spectral_norm(&m);
            assert!((n - oracle).abs() < 1e-12);
            assert!((n - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn certificate_holds_and_scales() {
        let (phi, eng) = ising_chain(6);
        let pairs = vec![NamedPair::new(
            "Z0",
            op(0, pauli_z()),
            "Z3",
            op(3, pauli_z()),
        )];
        let times: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let cert = certify_lr(&eng, &phi, DEFAULT_LAMBDA, &pairs, &times).unwrap();
        assert!(cert.passed());
        assert!(cert.rows.iter().all(|r| r.satisfied));
        assert!(!cert.rows[0].boundary_affected);
        assert_eq!(cert.rows[0].empirical_norm, 0.0);
        let scaled = vec![NamedPair::new(
            "3Z0",
            op(0, pauli_z()).scale(C64::new(3.0, 0.0)),
            "Z3",
            op(3, pauli_z()),
        )];
        let cert3 = certify_lr(&eng, &phi, DEFAULT_LAMBDA, &scaled, &times).unwrap();
        for (r, r3) in cert.rows.iter().zip(&cert3.rows) {
            assert!((r3.margin - 3.0 * r.margin).abs() <= 1e-9 * r3.margin.abs().max(1.0));
        }
        assert!(cert.to_table().contains("Z3"));
    }

    #[test]
    fn localization_examples() {
        let (phi, eng) = ising_chain(6);
        let a = op(2, pauli_z());
        let v = phi.lr_velocity(DEFAULT_LAMBDA);
        let rep = localization_curve(&eng, &a, 0.0, &[0, 1, 2], 4.0, DEFAULT_LAMBDA, v).unwrap();
        assert!(rep.rows.iter().all(|r| r.empirical_error < 1e-13));
        let rep =
            localization_curve(&eng, &a, 0.5, &[0, 1, 2, 3, 4, 5], 4.0, DEFAULT_LAMBDA, v).unwrap();
        assert!(rep.is_nonincreasing(1e-10));
        let last = rep.rows.last().unwrap();
        assert_eq!(last.region_size, 6);
        assert!(last.empirical_error < 1e-13);
        assert!(rep
            .rows
            .iter()
            .all(|r| r.empirical_error <= 2.0 * a.norm() + 1e-12));
        assert!(localization_curve(&eng, &a, 0.5, &[1], 0.0, DEFAULT_LAMBDA, v).is_err());
    }

    #[test]
    fn abelianness_examples() {
        let phi = ModelPreset::transverse_ising(1.0, 1.0)
            .expand(&Torus::periodic([8]), 2, DEFAULT_LAMBDA)
            .unwrap();
        let eng = EvolutionEngine::from_interaction(&phi).unwrap();
        let v_lr = phi.lr_velocity(DEFAULT_LAMBDA);
        let a = op(0, pauli_z());
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let rows = abelianness_probe(
            &eng,
            &a,
            &id,
            &Site::from(1),
            2.0 * v_lr,
            4,
            DEFAULT_LAMBDA,
            v_lr,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.norm < 1e-12));
        let rows = abelianness_probe(
            &eng,
            &a,
            &op(0, pauli_x()),
            &Site::from(1),
            f64::INFINITY,
            4,
            DEFAULT_LAMBDA,
            v_lr,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.t == 0.0 && r.norm == 0.0));
        let rows = abelianness_probe(
            &eng,
            &a,
            &op(0, pauli_x()),
            &Site::from(1),
            2.0 * v_lr,
            4,
            DEFAULT_LAMBDA,
            v_lr,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.norm <= r.rhs + LR_SLACK));
        let err = abelianness_probe(&eng, &a, &id, &Site::from(1), 1.0, 5, DEFAULT_LAMBDA, v_lr)
            .unwrap_err();
        assert!(matches!(err, Error::WrapGuard(_)));
    }
}
