//! Ray-averaged correlation functionals and the dynamical structure factor.
//!
//! Every time integral is a composite Gauss-Legendre sum. In the default
//! breakpoint-exact scheme `[0, T]` is first split where the floor-discretized
//! ray `⌊v q t⌋` jumps, so the translation is constant on each piece and the
//! integrand is smooth there; each piece is then cut into panels no wider than
//! `2 / ω_max`, with `ω_max` the largest frequency present (spectral spread of
//! `H` plus the phase frequency). The uniform scheme uses panels of width `dt`
//! and evaluates the translation node by node.
//!
//! Error estimates compare the reported value with the same rule at twice the
//! order (and, for the uniform scheme, at half the panel width):
//! `2·max|Q − Q'| + 64ε·Σ|w f| + 1e-15`.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::LocalOperator;
use crate::dynamics::EvolutionEngine;
use crate::error::{Error, Result};
use crate::lattice::{ray_breakpoints, ray_point, RationalDirection, Site, Torus};
use crate::linalg::{self, CMat};
use crate::quadrature;
use crate::states::State;

/// Gauss-Legendre points per panel when not configured.
pub const DEFAULT_ORDER: usize = 8;

/// Lower cutoff of the Euler-scale time average when not configured.
pub const DEFAULT_T_MIN: f64 = 1.0;

/// Absolute tolerance of the Euler-scale adaptive quadrature, per unit time.
pub const EULER_TOL: f64 = 1e-11;

const EULER_MAX_DEPTH: u32 = 30;
const NODE_CHUNK: usize = 32;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Space-time ray `t ↦ ⌊v q t⌋` with an optional phase `e^{i(k·v⃗ − f)t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySpec {
    pub q: RationalDirection,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
}

impl RaySpec {
    pub fn new(q: RationalDirection, v: f64) -> Self {
        RaySpec {
            q,
            v,
            k: None,
            f: None,
        }
    }

    /// Along lattice axis 0 of a one-dimensional chain.
    pub fn chain(v: f64) -> Self {
        RaySpec::new(RationalDirection::new(Site::from(1)).expect("non-zero"), v)
    }

    pub fn with_phase(mut self, k: Vec<f64>, f: f64) -> Result<Self> {
        self.k = Some(k);
        self.f = Some(f);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ray speed must be finite, got {}",
                self.v
            )));
        }
        match (&self.k, self.f) {
            (None, None) => Ok(()),
            (Some(k), Some(f)) => {
                if k.len() != self.q.dim() {
                    return Err(Error::LatticeDimMismatch {
                        expected: self.q.dim(),
                        got: k.len(),
                    });
                }
                if !f.is_finite() || k.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "wavevector and frequency must be finite".into(),
                    ));
                }
                Ok(())
            }
            _ => Err(Error::InvalidArgument(
                "wavevector k and frequency f must be given together".into(),
            )),
        }
    }

    /// Velocity vector `v · q`.
    pub fn velocity(&self) -> Vec<f64> {
        self.q.unit().iter().map(|u| u * self.v).collect()
    }

    /// Phase frequency `θ = k·v⃗ − f` (zero without a phase).
    pub fn theta(&self) -> f64 {
        match (&self.k, self.f) {
            (Some(k), Some(f)) => {
                k.iter()
                    .zip(self.velocity())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    - f
            }
            _ => 0.0,
        }
    }

    pub fn has_phase(&self) -> bool {
        self.k.is_some()
    }

    pub fn point(&self, t: f64) -> Site {
        ray_point(self.v, &self.q, t)
    }

    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        ray_breakpoints(self.v, &self.q, horizon)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    #[default]
    BreakpointExact,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub per_piece_order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::breakpoint_exact(DEFAULT_ORDER)
    }
}

impl QuadratureSpec {
    pub fn breakpoint_exact(order: usize) -> Self {
        QuadratureSpec {
            scheme: QuadratureScheme::BreakpointExact,
            dt: None,
            per_piece_order: order,
        }
    }

    pub fn uniform(dt: f64, order: usize) -> Self {
        QuadratureSpec {
            scheme: QuadratureScheme::Uniform,
            dt: Some(dt),
            per_piece_order: order,
        }
    }

    /// Same scheme at a different order.
    pub fn with_order(&self, order: usize) -> Self {
        QuadratureSpec {
            per_piece_order: order,
            ..self.clone()
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.per_piece_order == 0 {
            return Err(Error::InvalidArgument(
                "per_piece_order must be at least 1".into(),
            ));
        }
        if self.scheme == QuadratureScheme::Uniform {
            let dt = self
                .dt
                .ok_or_else(|| Error::InvalidArgument("uniform quadrature needs dt".into()))?;
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "dt must be positive, got {dt}"
                )));
            }
            if dt > horizon / 10.0 {
                return Err(Error::InvalidArgument(format!(
                    "dt = {dt} exceeds T/10 = {}",
                    horizon / 10.0
                )));
            }
        }
        Ok(())
    }
}

/// Finite-horizon ray average.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageResult {
    /// Primary value: unsubtracted for plain averages, connected for
    /// oscillatory ones.
    pub value: C64,
    /// `(1/T)∫ phase · ω(ι τ_t(A) B) dt`.
    pub unsubtracted: C64,
    /// `(1/T)∫ phase · (ω(ι τ_t(A) B) − ω(A)ω(B)) dt`.
    pub connected: C64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub estimated_quadrature_error: f64,
    pub ray: RaySpec,
}

#[derive(Clone, Debug)]
struct Node {
    t: f64,
    w: f64,
    shift: Site,
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon T must be positive and finite, got {horizon}"
        )));
    }
    Ok(())
}

fn check_ray(eng: &EvolutionEngine, ray: &RaySpec) -> Result<()> {
    ray.validate()?;
    if ray.q.dim() != eng.torus().dim() {
        return Err(Error::LatticeDimMismatch {
            expected: eng.torus().dim(),
            got: ray.q.dim(),
        });
    }
    Ok(())
}

fn check_state(s: &State, eng: &EvolutionEngine) -> Result<()> {
    if s.volume() != eng.volume() || s.site_dim() != eng.site_dim() {
        return Err(Error::InvalidArgument(format!(
            "state lives on {} but the engine on {}",
            s.volume(),
            eng.volume()
        )));
    }
    Ok(())
}

fn shift_key(torus: &Torus, n: &Site) -> Site {
    torus.canonical_shift(n)
}

/// Node sets for the primary value followed by its refinement checks.
fn node_sets(
    eng: &EvolutionEngine,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    theta: f64,
) -> Result<Vec<Vec<Node>>> {
    check_horizon(horizon)?;
    check_ray(eng, ray)?;
    quad.validate(horizon)?;
    let p = quad.per_piece_order;
    let omega = eng.spectral_spread() + theta.abs();
    let max_width = if omega > 0.0 {
        2.0 / omega
    } else {
        f64::INFINITY
    };
    let torus = eng.torus();
    match quad.scheme {
        QuadratureScheme::BreakpointExact => {
            let mut cuts = vec![0.0];
            cuts.extend(ray.breakpoints(horizon));
            cuts.push(horizon);
            let mut pieces = Vec::with_capacity(cuts.len() - 1);
            for w in cuts.windows(2) {
                let shift = shift_key(torus, &ray.point(0.5 * (w[0] + w[1])));
                pieces.push((w[0], w[1], shift));
            }
            let build = |order: usize| {
                let rule = quadrature::gauss_legendre(order);
                let mut nodes = Vec::new();
                let mut buf = Vec::new();
                for (a, b, shift) in &pieces {
                    buf.clear();
                    for (lo, hi) in quadrature::panels(*a, *b, max_width) {
                        quadrature::map_rule(&rule, lo, hi, &mut buf);
                    }
                    nodes.extend(buf.iter().map(|&(t, w)| Node {
                        t,
                        w,
                        shift: shift.clone(),
                    }));
                }
                nodes
            };
            Ok(vec![build(p), build(2 * p)])
        }
        QuadratureScheme::Uniform => {
            let dt = quad.dt.expect("validated");
            let build = |order: usize, width: f64| {
                quadrature::composite(&quadrature::panels(0.0, horizon, width), order)
                    .into_iter()
                    .map(|(t, w)| Node {
                        t,
                        w,
                        shift: shift_key(torus, &ray.point(t)),
                    })
                    .collect::<Vec<_>>()
            };
            Ok(vec![build(p, dt), build(2 * p, dt), build(p, 0.5 * dt)])
        }
    }
}

fn group_nodes(sets: &[Vec<Node>]) -> BTreeMap<Site, Vec<Vec<(f64, f64)>>> {
    let mut groups: BTreeMap<Site, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for (i, set) in sets.iter().enumerate() {
        for node in set {
            let entry = groups
                .entry(node.shift.clone())
                .or_insert_with(|| vec![Vec::new(); sets.len()]);
            entry[i].push((node.t, node.w));
        }
    }
    groups
}

fn phases(eng: &EvolutionEngine, t: f64) -> Vec<C64> {
    eng.eigenvalues()
        .iter()
        .map(|&e| C64::from_polar(1.0, e * t))
        .collect()
}

fn translate_full(eng: &EvolutionEngine, m: &CMat, n: &Site) -> Result<CMat> {
    if n.is_zero() {
        return Ok(m.clone());
    }
    let op = LocalOperator::new(eng.volume().clone(), m.clone(), eng.site_dim())?;
    Ok(op.translate(eng.torus(), n)?.into_matrix())
}

/// `ι_n A` on an open box, reporting a safe-window error when it leaves.
fn shift_local(eng: &EvolutionEngine, a: &LocalOperator, n: &Site) -> Result<LocalOperator> {
    a.translate(eng.torus(), n).map_err(|e| match e {
        Error::OutOfBox { site, .. } => Error::SafeWindowExceeded(format!(
            "ray translate of {} by {n} leaves the open box at {site}",
            a.support()
        )),
        other => other,
    })
}

/// Whether `a` is exactly `c·I`.
fn is_scalar(a: &LocalOperator) -> bool {
    a.as_scalar().is_some()
}

#[derive(Clone, Copy, Debug, Default)]
struct Sums {
    /// `Σ w·phase·f(t)`
    s1: C64,
    /// `Σ w·phase`
    s0: C64,
    /// `Σ |w·f(t)|`
    abs: f64,
}

impl std::ops::AddAssign for Sums {
    fn add_assign(&mut self, o: Sums) {
        self.s1 += o.s1;
        self.s0 += o.s0;
        self.abs += o.abs;
    }
}

/// Evaluates `t ↦ ω(ι_n τ_t(A) ·)` where the state and right factor are
/// folded into the full-volume matrix `right`, so that the integrand is
/// `tr(ι_n τ_t(A) · right)`.
struct ScalarKernel<'a> {
    eng: &'a EvolutionEngine,
    a: &'a LocalOperator,
    right: CMat,
    a_eig: Option<CMat>,
    right_eig: Option<CMat>,
}

impl<'a> ScalarKernel<'a> {
    fn new(eng: &'a EvolutionEngine, a: &'a LocalOperator, right: CMat) -> Result<Self> {
        let (a_eig, right_eig) = if eng.torus().is_periodic() {
            (Some(eng.to_eigenbasis(&eng.lift(a)?)), None)
        } else {
            (None, Some(eng.to_eigenbasis(&right)))
        };
        Ok(ScalarKernel {
            eng,
            a,
            right,
            a_eig,
            right_eig,
        })
    }

    /// `P_{jk} = A'_{jk} M'_{kj}`, so that the integrand at time `t` is
    /// `Σ_{jk} P_{jk} e^{i(E_j−E_k)t}`.
    fn pair_matrix(&self, n: &Site) -> Result<CMat> {
        let (a_eig, m_eig) = if let Some(a_eig) = &self.a_eig {
            let moved = translate_full(self.eng, &self.right, &n.neg())?;
            (a_eig.clone(), self.eng.to_eigenbasis(&moved))
        } else {
            let shifted = shift_local(self.eng, self.a, n)?;
            (
                self.eng.to_eigenbasis(&self.eng.lift(&shifted)?),
                self.right_eig.clone().expect("open box"),
            )
        };
        let d = a_eig.nrows();
        Ok(CMat::from_fn(d, d, |j, k| a_eig[(j, k)] * m_eig[(k, j)]))
    }

    fn sums(&self, sets: &[Vec<Node>], theta: f64) -> Result<Vec<Sums>> {
        let mut out = vec![Sums::default(); sets.len()];
        for (shift, lists) in group_nodes(sets) {
            let p = self.pair_matrix(&shift)?;
            for (i, list) in lists.iter().enumerate() {
                out[i] += scalar_group(self.eng, &p, list, theta);
            }
        }
        Ok(out)
    }
}

fn scalar_group(eng: &EvolutionEngine, p: &CMat, nodes: &[(f64, f64)], theta: f64) -> Sums {
    let d = p.nrows();
    let parts: Vec<Sums> = nodes
        .par_iter()
        .map(|&(t, w)| {
            let ph = phases(eng, t);
            let mut val = ZERO;
            for k in 0..d {
                let col = p.column(k);
                let mut s = ZERO;
                for j in 0..d {
                    s += ph[j] * col[j];
                }
                val += s * ph[k].conj();
            }
            let wp = C64::from_polar(w, theta * t);
            Sums {
                s1: wp * val,
                s0: wp,
                abs: (val * w).norm(),
            }
        })
        .collect();
    let mut acc = Sums::default();
    for s in parts {
        acc += s;
    }
    acc
}

fn roundoff_floor(abs: f64, horizon: f64) -> f64 {
    64.0 * f64::EPSILON * abs / horizon + 1e-15
}

fn scalar_average(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    right: CMat,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    theta: f64,
    offset: C64,
    connected_primary: bool,
    eng: &EvolutionEngine,
) -> Result<AverageResult> {
    check_state(s, eng)?;
    let sets = node_sets(eng, ray, horizon, quad, theta)?;
    let kernel = ScalarKernel::new(eng, a, right)?;
    let sums = kernel.sums(&sets, theta)?;
    let unsub = |x: &Sums| x.s1 / horizon;
    let conn = |x: &Sums| {
        if is_scalar(a) || is_scalar(b) {
            ZERO
        } else {
            (x.s1 - offset * x.s0) / horizon
        }
    };
    let pick = |x: &Sums| if connected_primary { conn(x) } else { unsub(x) };
    let primary = &sums[0];
    let value = pick(primary);
    let spread = sums[1..]
        .iter()
        .map(|x| (pick(x) - value).norm())
        .fold(0.0, f64::max);
    let abs = sums
        .iter()
        .map(|x| x.abs + offset.norm() * x.s0.norm())
        .fold(0.0, f64::max);
    Ok(AverageResult {
        value,
        unsubtracted: unsub(primary),
        connected: conn(primary),
        horizon,
        estimated_quadrature_error: 2.0 * spread + roundoff_floor(abs, horizon),
        ray: ray.clone(),
    })
}

/// `(1/T)∫₀ᵀ ω(ι_{⌊vqt⌋} τ_t(A) B) dt`.
pub fn ray_average(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<AverageResult> {
    let right = linalg::matmul(&eng.lift(b)?, s.rho());
    let offset = s.expect(a)? * s.expect(b)?;
    scalar_average(s, a, b, right, ray, horizon, quad, 0.0, offset, false, eng)
}

/// `(1/T)∫₀ᵀ e^{i(k·v⃗−f)t} (ω(ι_{⌊vqt⌋} τ_t(A) B) − ω(A)ω(B)) dt`; the
/// connected value is primary. Without a phase on the ray `θ = 0`.
pub fn oscillatory_ray_average(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<AverageResult> {
    let right = linalg::matmul(&eng.lift(b)?, s.rho());
    let offset = s.expect(a)? * s.expect(b)?;
    scalar_average(
        s,
        a,
        b,
        right,
        ray,
        horizon,
        quad,
        ray.theta(),
        offset,
        true,
        eng,
    )
}

/// `(1/T)∫₀ᵀ ω([ι_{⌊vqt⌋} τ_t(A), B]) dt`.
pub fn commutator_ray_average(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<AverageResult> {
    let bm = eng.lift(b)?;
    let right = linalg::matmul(&bm, s.rho()) - linalg::matmul(s.rho(), &bm);
    scalar_average(s, a, b, right, ray, horizon, quad, 0.0, ZERO, false, eng)
}

/// Calls `f(shift, X)` for each translation group with
/// `X = Σ_{nodes} w·e^{iθt} ι_n τ_t(A)` as a full-volume matrix.
fn operator_groups(
    eng: &EvolutionEngine,
    a: &LocalOperator,
    nodes: &[Node],
    theta: f64,
    mut f: impl FnMut(&Site, CMat) -> Result<()>,
) -> Result<()> {
    let periodic = eng.torus().is_periodic();
    let a_eig = if periodic {
        Some(eng.to_eigenbasis(&eng.lift(a)?))
    } else {
        None
    };
    let groups = group_nodes(std::slice::from_ref(&nodes.to_vec()));
    for (shift, lists) in groups {
        let g = phase_gram(eng, &lists[0], theta);
        let x = if let Some(a_eig) = &a_eig {
            let inner = eng.from_eigenbasis(&a_eig.component_mul(&g));
            translate_full(eng, &inner, &shift)?
        } else {
            let shifted = shift_local(eng, a, &shift)?;
            let a_eig = eng.to_eigenbasis(&eng.lift(&shifted)?);
            eng.from_eigenbasis(&a_eig.component_mul(&g))
        };
        f(&shift, x)?;
    }
    Ok(())
}

/// `G_{jk} = Σ w e^{iθt} e^{i(E_j−E_k)t}`, summed in fixed chunks so the
/// result does not depend on the worker count.
fn phase_gram(eng: &EvolutionEngine, nodes: &[(f64, f64)], theta: f64) -> CMat {
    let d = eng.dim();
    let parts: Vec<CMat> = nodes
        .par_chunks(NODE_CHUNK)
        .map(|chunk| {
            let mut g = CMat::zeros(d, d);
            for &(t, w) in chunk {
                let ph = phases(eng, t);
                let wp = C64::from_polar(w, theta * t);
                for k in 0..d {
                    let c = wp * ph[k].conj();
                    let mut col = g.column_mut(k);
                    for j in 0..d {
                        col[j] += ph[j] * c;
                    }
                }
            }
            g
        })
        .collect();
    let mut g = CMat::zeros(d, d);
    for p in parts {
        g += p;
    }
    g
}

fn operator_integral(
    eng: &EvolutionEngine,
    a: &LocalOperator,
    nodes: &[Node],
    theta: f64,
) -> Result<CMat> {
    let d = eng.dim();
    let mut total = CMat::zeros(d, d);
    operator_groups(eng, a, nodes, theta, |_, x| {
        total += x;
        Ok(())
    })?;
    Ok(total)
}

/// Normalized operator average `(1/T)∫₀ᵀ ι_{⌊vqt⌋} τ_t(A) dt` on the full
/// volume together with its quadrature error estimate (Frobenius norm, an
/// upper bound on the operator norm).
pub fn ray_average_operator_with_error(
    a: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<(LocalOperator, f64)> {
    let sets = node_sets(eng, ray, horizon, quad, 0.0)?;
    if is_scalar(a) {
        let op = a.embed(eng.volume())?;
        return Ok((op, 0.0));
    }
    let mats: Vec<CMat> = sets
        .iter()
        .map(|set| operator_integral(eng, a, set, 0.0).map(|m| m / C64::new(horizon, 0.0)))
        .collect::<Result<_>>()?;
    let spread = mats[1..]
        .iter()
        .map(|m| (m - &mats[0]).norm())
        .fold(0.0, f64::max);
    let scale = mats[0].norm();
    let err = 2.0 * spread + 64.0 * f64::EPSILON * scale + 1e-15;
    let mut mats = mats;
    let op = LocalOperator::new(eng.volume().clone(), mats.swap_remove(0), eng.site_dim())?;
    Ok((op, err))
}

/// Normalized operator average `(1/T)∫₀ᵀ ι_{⌊vqt⌋} τ_t(A) dt`, using the same
/// nodes as [`ray_average`].
pub fn ray_average_operator(
    a: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<LocalOperator> {
    Ok(ray_average_operator_with_error(a, ray, horizon, quad, eng)?.0)
}

/// `ω(Āⁿ)` with its error estimate.
pub fn moment_with_error(
    s: &State,
    a: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    n: u32,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<(C64, f64)> {
    check_state(s, eng)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "moment order must be at least 1".into(),
        ));
    }
    let (avg, err) = ray_average_operator_with_error(a, ray, horizon, quad, eng)?;
    let m = avg.into_matrix();
    let mut power = m.clone();
    for _ in 1..n {
        power = linalg::matmul(&power, &m);
    }
    let value = s.expect_matrix(&power);
    // ‖Xⁿ − Yⁿ‖ ≤ n·max(‖X‖,‖Y‖)^{n−1}·‖X − Y‖
    let bound = a.norm() * (1.0 + 1e-12) + err;
    let prop = n as f64 * bound.powi(n as i32 - 1) * err;
    Ok((
        value,
        prop + 64.0 * f64::EPSILON * bound.powi(n as i32) + 1e-15,
    ))
}

/// `ω(Āⁿ)` where `Ā` is the normalized operator ray average.
pub fn moment(
    s: &State,
    a: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    n: u32,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<C64> {
    Ok(moment_with_error(s, a, ray, horizon, n, quad, eng)?.0)
}

fn mean_square_at(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    nodes_a: &[Node],
    nodes_b: &[Node],
    eng: &EvolutionEngine,
) -> Result<(C64, f64)> {
    let mut left: Vec<CMat> = Vec::new();
    operator_groups(eng, a, nodes_a, 0.0, |_, x| {
        left.push(linalg::matmul(s.rho(), &x));
        Ok(())
    })?;
    let mut value = ZERO;
    let mut abs = 0.0;
    operator_groups(eng, b, nodes_b, 0.0, |_, y| {
        for l in &left {
            let term = linalg::trace_product(l, &y);
            value += term;
            abs += term.norm();
        }
        Ok(())
    })?;
    Ok((value, abs))
}

/// Mean-square average `(1/(TT'))∫₀ᵀ∫₀^{T'} ω(ι τ_{t₁}(A) ι τ_{t₂}(B)) dt₂ dt₁`
/// with its error estimate. The double sum runs over the product of the
/// translation pieces of both horizons.
pub fn mean_square_with_error(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    horizon_b: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<(C64, f64)> {
    check_state(s, eng)?;
    let sets_a = node_sets(eng, ray, horizon, quad, 0.0)?;
    let sets_b = node_sets(eng, ray, horizon_b, quad, 0.0)?;
    let norm = horizon * horizon_b;
    let mut results = Vec::with_capacity(sets_a.len());
    for (na, nb) in sets_a.iter().zip(&sets_b) {
        let (v, abs) = mean_square_at(s, a, b, na, nb, eng)?;
        results.push((v / norm, abs / norm));
    }
    let value = results[0].0;
    let spread = results[1..]
        .iter()
        .map(|r| (r.0 - value).norm())
        .fold(0.0, f64::max);
    let abs = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((value, 2.0 * spread + 64.0 * f64::EPSILON * abs + 1e-15))
}

/// Mean-square average `(1/(TT'))∬ ω(Ā(t₁) B̄(t₂))`.
pub fn mean_square(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    ray: &RaySpec,
    horizon: f64,
    horizon_b: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<C64> {
    Ok(mean_square_with_error(s, a, b, ray, horizon, horizon_b, quad, eng)?.0)
}

/// `ω(A₁ B̄₁ A₂ B̄₂ ⋯ B̄ₙ A_{n+1})` with `B̄ⱼ` the normalized ray average over
/// horizon `Tⱼ`.
pub fn multi_ray_average(
    s: &State,
    a_list: &[LocalOperator],
    b_list: &[LocalOperator],
    ray: &RaySpec,
    horizons: &[f64],
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<C64> {
    check_state(s, eng)?;
    let n = b_list.len();
    if n == 0 || a_list.len() != n + 1 || horizons.len() != n {
        return Err(Error::InvalidArgument(format!(
            "multi-point average needs n+1 A's, n B's and n horizons with n ≥ 1; got {}, {}, {}",
            a_list.len(),
            n,
            horizons.len()
        )));
    }
    let mut product = eng.lift(&a_list[0])?;
    for j in 0..n {
        let avg = ray_average_operator(&b_list[j], ray, horizons[j], quad, eng)?;
        product = linalg::matmul(&product, avg.matrix());
        product = linalg::matmul(&product, &eng.lift(&a_list[j + 1])?);
    }
    Ok(s.expect_matrix(&product))
}

/// Convergence-sweep quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SweepMode {
    Plain,
    Oscillatory { k: Vec<f64>, f: f64 },
    MeanSquare,
    Moment { n: u32 },
}

impl SweepMode {
    pub fn label(&self) -> String {
        match self {
            SweepMode::Plain => "plain".into(),
            SweepMode::Oscillatory { .. } => "oscillatory".into(),
            SweepMode::MeanSquare => "mean_square".into(),
            SweepMode::Moment { n } => format!("moment{n}"),
        }
    }
}

/// One `(v, T)` cell of a convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: String,
    pub v: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub value: C64,
    /// The infinite-time limit predicted for this quantity.
    pub reference: C64,
    pub abs_deviation: f64,
    pub quad_error: f64,
    pub wall_ms: f64,
}

/// Finite-horizon values against their predicted limits on a `(v, T)` grid.
/// Rows are ordered by speed, then horizon, regardless of scheduling.
pub fn convergence_sweep(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    q: &RationalDirection,
    v_grid: &[f64],
    t_grid: &[f64],
    mode: &SweepMode,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<Vec<SweepRow>> {
    if v_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep grids must be non-empty".into(),
        ));
    }
    check_state(s, eng)?;
    let wa = s.expect(a)?;
    let wb = s.expect(b)?;
    let reference = match mode {
        SweepMode::Plain | SweepMode::MeanSquare => wa * wb,
        SweepMode::Oscillatory { .. } => ZERO,
        SweepMode::Moment { n } => wa.powu(*n),
    };
    let cells: Vec<(usize, usize)> = (0..v_grid.len())
        .flat_map(|i| (0..t_grid.len()).map(move |j| (i, j)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let (v, horizon) = (v_grid[i], t_grid[j]);
            let start = Instant::now();
            let ray = RaySpec::new(q.clone(), v);
            let (value, quad_error) = match mode {
                SweepMode::Plain => {
                    let r = ray_average(s, a, b, &ray, horizon, quad, eng)?;
                    (r.value, r.estimated_quadrature_error)
                }
                SweepMode::Oscillatory { k, f } => {
                    let ray = ray.with_phase(k.clone(), *f)?;
                    let r = oscillatory_ray_average(s, a, b, &ray, horizon, quad, eng)?;
                    (r.value, r.estimated_quadrature_error)
                }
                SweepMode::MeanSquare => {
                    mean_square_with_error(s, a, b, &ray, horizon, horizon, quad, eng)?
                }
                SweepMode::Moment { n } => moment_with_error(s, a, &ray, horizon, *n, quad, eng)?,
            };
            Ok(SweepRow {
                mode: mode.label(),
                v,
                horizon,
                value,
                reference,
                abs_deviation: (value - reference).norm(),
                quad_error,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("sweep cell: {m}")),
            other => other,
        })
}

/// Cesàro means of a space-like correlation sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpacelikeProbe {
    /// `e^{−i(k·n − f|n|/v)m} ω(ι_{mn} τ_{m|n|/v}(A) B)` for `m = 1..M`.
    pub terms: Vec<C64>,
    /// Running means of `terms`.
    pub partial_means: Vec<C64>,
    /// Terms with `ω(A)ω(B)` subtracted before the phase is applied.
    pub connected_terms: Vec<C64>,
    pub connected_means: Vec<C64>,
}

/// Partial Cesàro means along the space-like ray through `n` at speed `v`.
/// `v = ∞` evaluates every term at time zero.
pub fn spacelike_probe(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    n: &Site,
    v: f64,
    m_max: usize,
    phase: Option<(&[f64], f64)>,
    eng: &EvolutionEngine,
) -> Result<SpacelikeProbe> {
    check_state(s, eng)?;
    let torus = eng.torus();
    if n.dim() != torus.dim() {
        return Err(Error::LatticeDimMismatch {
            expected: torus.dim(),
            got: n.dim(),
        });
    }
    if n.is_zero() {
        return Err(Error::InvalidArgument(
            "space-like direction must be non-zero".into(),
        ));
    }
    if v == 0.0 || v.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "space-like speed must be non-zero, got {v}"
        )));
    }
    if m_max == 0 {
        return Err(Error::InvalidArgument("m_max must be at least 1".into()));
    }
    if torus.is_periodic() && !torus.within_half_extent(&n.scale(m_max as i64)) {
        return Err(Error::WrapGuard(format!(
            "{m_max}·{n} exceeds half the periodic extent {:?}",
            torus.extent()
        )));
    }
    let step_time = n.l1_norm() as f64 / v;
    let step_phase = match phase {
        Some((k, f)) => {
            if k.len() != n.dim() {
                return Err(Error::LatticeDimMismatch {
                    expected: n.dim(),
                    got: k.len(),
                });
            }
            let kn: f64 = k.iter().zip(n.coords()).map(|(k, &c)| k * c as f64).sum();
            kn - f * step_time
        }
        None => 0.0,
    };
    let offset = s.expect(a)? * s.expect(b)?;
    let scalar = is_scalar(a) || is_scalar(b);
    let bm = eng.lift(b)?;
    let right = linalg::matmul(&bm, s.rho());
    let terms: Vec<(C64, C64)> = (1..=m_max)
        .into_par_iter()
        .map(|m| {
            let t = m as f64 * step_time;
            let x = eng.lift(&eng.evolve_translated(a, &n.scale(m as i64), t)?)?;
            let raw = linalg::trace_product(&x, &right);
            let ph = C64::from_polar(1.0, -step_phase * m as f64);
            let conn = if scalar { ZERO } else { (raw - offset) * ph };
            Ok((raw * ph, conn))
        })
        .collect::<Result<_>>()?;
    let running = |xs: &[C64]| {
        let mut acc = ZERO;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                acc += x;
                acc / (i + 1) as f64
            })
            .collect::<Vec<_>>()
    };
    let raw: Vec<C64> = terms.iter().map(|p| p.0).collect();
    let conn: Vec<C64> = terms.iter().map(|p| p.1).collect();
    Ok(SpacelikeProbe {
        partial_means: running(&raw),
        connected_means: running(&conn),
        terms: raw,
        connected_terms: conn,
    })
}

/// Connected correlations `ω(ι_n τ_t(A*) B) − ω(A*)ω(B)` for every shift of
/// the sum, paired with the displacement used in the Fourier phase.
fn connected_terms(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    t: f64,
    eng: &EvolutionEngine,
) -> Result<Vec<(Site, C64)>> {
    let a_star = a.adjoint();
    let offset = s.expect(&a_star)? * s.expect(b)?;
    let right = linalg::matmul(&eng.lift(b)?, s.rho());
    let torus = eng.torus();
    if torus.is_periodic() {
        let x = eng.lift(&eng.evolve(&a_star, t)?)?;
        let shifts: Vec<Site> = torus.all_sites().iter().cloned().collect();
        shifts
            .par_iter()
            .map(|n| {
                let moved = translate_full(eng, &x, n)?;
                Ok((
                    torus.minimal_image(n),
                    linalg::trace_product(&moved, &right) - offset,
                ))
            })
            .collect()
    } else {
        let shifts = open_shifts(torus, &a_star);
        shifts
            .par_iter()
            .map(|n| {
                let x = eng.lift(&eng.evolve(&shift_local(eng, &a_star, n)?, t)?)?;
                Ok((n.clone(), linalg::trace_product(&x, &right) - offset))
            })
            .collect()
    }
}

/// Every displacement keeping the support of `a` inside an open box.
fn open_shifts(torus: &Torus, a: &LocalOperator) -> Vec<Site> {
    let mut out = vec![Vec::<i64>::new()];
    for &l in torus.extent() {
        let l = l as i64;
        out = out
            .into_iter()
            .flat_map(|p| {
                (-(l - 1)..l).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out.into_iter()
        .map(Site::new)
        .filter(|n| torus.translate(a.support(), n).is_ok())
        .collect()
}

fn fourier(terms: &[(Site, C64)], k: &[f64]) -> C64 {
    let mut acc = ZERO;
    for (n, c) in terms {
        let phase: f64 = k.iter().zip(n.coords()).map(|(k, &x)| k * x as f64).sum();
        acc += C64::from_polar(1.0, phase) * c;
    }
    acc
}

/// `S(k, t) = Σ_n e^{ik·n} (ω(ι_n τ_t(A*) B) − ω(A*)ω(B))`, summing over
/// minimal-image shifts on periodic boxes and over in-box shifts on open ones.
pub fn structure_factor(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    k: &[f64],
    t: f64,
    eng: &EvolutionEngine,
) -> Result<C64> {
    check_state(s, eng)?;
    if k.len() != eng.torus().dim() {
        return Err(Error::LatticeDimMismatch {
            expected: eng.torus().dim(),
            got: k.len(),
        });
    }
    if is_scalar(a) || is_scalar(b) {
        return Ok(ZERO);
    }
    Ok(fourier(&connected_terms(s, a, b, t, eng)?, k))
}

/// Euler-scale time average of the structure factor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EulerResult {
    pub value: C64,
    pub kappa: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t_min: f64,
    pub estimated_error: f64,
}

/// `(1/(T − t_min))∫_{t_min}^T S(κ/t, t) dt` by adaptive Gauss-Legendre
/// bisection. The cutoff `t_min` regularizes the `t → 0` end.
pub fn euler_scale_average(
    s: &State,
    a: &LocalOperator,
    b: &LocalOperator,
    kappa: &[f64],
    horizon: f64,
    t_min: f64,
    quad: &QuadratureSpec,
    eng: &EvolutionEngine,
) -> Result<EulerResult> {
    check_state(s, eng)?;
    check_horizon(horizon)?;
    if !(t_min > 0.0) || t_min >= horizon {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t_min < T, got t_min = {t_min}, T = {horizon}"
        )));
    }
    if kappa.len() != eng.torus().dim() {
        return Err(Error::LatticeDimMismatch {
            expected: eng.torus().dim(),
            got: kappa.len(),
        });
    }
    if quad.per_piece_order == 0 {
        return Err(Error::InvalidArgument(
            "per_piece_order must be at least 1".into(),
        ));
    }
    let span = horizon - t_min;
    let mut out = EulerResult {
        value: ZERO,
        kappa: kappa.to_vec(),
        horizon,
        t_min,
        estimated_error: 0.0,
    };
    if is_scalar(a) || is_scalar(b) {
        return Ok(out);
    }
    let integrand = |t: f64| -> Result<C64> {
        let k: Vec<f64> = kappa.iter().map(|x| x / t).collect();
        Ok(fourier(&connected_terms(s, a, b, t, eng)?, &k))
    };
    let r = quadrature::adaptive(
        integrand,
        t_min,
        horizon,
        quad.per_piece_order,
        EULER_TOL * span,
        EULER_MAX_DEPTH,
    )?;
    out.value = r.integral / span;
    out.estimated_error = r.error / span + 1e-15;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{pauli_x, pauli_y, pauli_z};
    use crate::lattice::Region;
    use crate::model::ModelPreset;
    use std::f64::consts::PI;

    fn op(site: i64, m: CMat) -> LocalOperator {
        LocalOperator::single_site(Site::from(site), m).unwrap()
    }

    fn precession() -> EvolutionEngine {
        let vol = Region::chain([0, 1]);
        let h = op(0, pauli_z()).embed(&vol).unwrap();
        EvolutionEngine::build(h, Torus::open([2])).unwrap()
    }

    fn tfim(l: usize, periodic: bool) -> EvolutionEngine {
        let torus = if periodic {
            Torus::periodic([l])
        } else {
            Torus::open([l])
        };
        let phi = ModelPreset::tilted_ising(1.0, 1.05, 0.5)
            .expand(&torus, 2, 1.0)
            .unwrap();
        EvolutionEngine::from_interaction(&phi).unwrap()
    }

    #[test]
    fn identity_average_is_expectation() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.7).unwrap();
        let b = op(1, pauli_x()).compose(&op(2, pauli_z())).unwrap();
        let id = LocalOperator::identity(Region::chain([0]), 2);
        for v in [0.0, 0.8, -1.7] {
            let r = ray_average(
                &s,
                &id,
                &b,
                &RaySpec::chain(v),
                3.3,
                &QuadratureSpec::default(),
                &eng,
            )
            .unwrap();
            assert!((r.value - s.expect(&b).unwrap()).norm() < 1e-12, "v = {v}");
        }
    }

    #[test]
    fn conserved_observable_gives_constant_integrand() {
        let eng = precession();
        let s = State::tracial(eng.volume().clone(), 2);
        let a = op(0, pauli_z());
        let b = op(0, pauli_z()).compose(&op(1, pauli_x())).unwrap();
        let r = ray_average(
            &s,
            &a,
            &b,
            &RaySpec::chain(0.0),
            2.0,
            &QuadratureSpec::default(),
            &eng,
        )
        .unwrap();
        let exact = s.expect(&a.compose(&b).unwrap()).unwrap();
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn precession_average_over_full_period_vanishes() {
        let eng = precession();
        let s = State::tracial(eng.volume().clone(), 2);
        let x = op(0, pauli_x());
        let r = ray_average(
            &s,
            &x,
            &x,
            &RaySpec::chain(0.0),
            PI,
            &QuadratureSpec::default(),
            &eng,
        )
        .unwrap();
        assert!(r.value.norm() < 1e-10);
        // off-period horizon: (1/T)∫₀ᵀ cos 2t dt = sin 2T / 2T
        let t = 1.3;
        let r = ray_average(
            &s,
            &x,
            &x,
            &RaySpec::chain(0.0),
            t,
            &QuadratureSpec::default(),
            &eng,
        )
        .unwrap();
        assert!((r.value.re - (2.0 * t).sin() / (2.0 * t)).abs() < 1e-12);
        assert!(r.estimated_quadrature_error >= 0.0);
    }

    #[test]
    fn oscillatory_constant_full_period() {
        let eng = precession();
        let s = State::tracial(eng.volume().clone(), 2);
        let a = op(0, pauli_z());
        let ray = RaySpec::chain(0.0).with_phase(vec![0.0], -PI).unwrap();
        assert!((ray.theta() - PI).abs() < 1e-15);
        let r = oscillatory_ray_average(&s, &a, &a, &ray, 2.0, &QuadratureSpec::default(), &eng)
            .unwrap();
        assert!(r.value.norm() < 1e-12);
        assert!(r.unsubtracted.norm() < 1e-12);
        // half period: c(e^{iθT}−1)/(iθT) with c = 1
        let r = oscillatory_ray_average(&s, &a, &a, &ray, 1.0, &QuadratureSpec::default(), &eng)
            .unwrap();
        let th = PI;
        let expect = (C64::from_polar(1.0, th) - 1.0) / C64::new(0.0, th);
        assert!((r.unsubtracted - expect).norm() < 1e-12);
    }

    #[test]
    fn zero_phase_reduces_to_plain_minus_product() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.4).unwrap();
        let a = op(0, pauli_z());
        let b = op(1, pauli_x());
        let ray = RaySpec::chain(0.6);
        let quad = QuadratureSpec::default();
        let plain = ray_average(&s, &a, &b, &ray, 4.0, &quad, &eng).unwrap();
        let osc = oscillatory_ray_average(&s, &a, &b, &ray, 4.0, &quad, &eng).unwrap();
        let prod = s.expect(&a).unwrap() * s.expect(&b).unwrap();
        assert!((osc.value - (plain.value - prod)).norm() < 1e-12);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let osc = oscillatory_ray_average(&s, &id, &b, &ray, 4.0, &quad, &eng).unwrap();
        assert_eq!(osc.value, ZERO);
    }

    #[test]
    fn operator_average_examples() {
        let eng = tfim(3, true);
        let quad = QuadratureSpec::default();
        let id = LocalOperator::identity(Region::chain([1]), 2);
        let avg = ray_average_operator(&id, &RaySpec::chain(1.3), 2.5, &quad, &eng).unwrap();
        assert_eq!(avg.matrix(), &CMat::identity(8, 8));
        let p = precession();
        let z = op(0, pauli_z());
        let avg = ray_average_operator(&z, &RaySpec::chain(0.0), 1.7, &quad, &p).unwrap();
        assert!((avg.matrix() - z.embed(p.volume()).unwrap().matrix()).norm() < 1e-13);
    }

    #[test]
    fn operator_average_matches_scalar_average() {
        for periodic in [true, false] {
            let eng = tfim(3, periodic);
            let s = State::gibbs(&eng, 0.5).unwrap();
            let a = op(0, pauli_x()).add(&op(0, pauli_y())).unwrap();
            let b = op(1, pauli_z()).compose(&op(2, pauli_x())).unwrap();
            let ray = RaySpec::chain(if periodic { 0.9 } else { 0.4 });
            let quad = QuadratureSpec::default();
            let scalar = ray_average(&s, &a, &b, &ray, 3.0, &quad, &eng).unwrap();
            let avg = ray_average_operator(&a, &ray, 3.0, &quad, &eng).unwrap();
            let via_op = s.expect(&avg.compose(&b).unwrap()).unwrap();
            assert!(
                (via_op - scalar.value).norm() < 1e-9,
                "periodic = {periodic}"
            );
            assert!(avg.norm() <= a.norm() + 1e-9);
        }
    }

    #[test]
    fn open_box_window_is_enforced() {
        let eng = tfim(3, false);
        let s = State::tracial(eng.volume().clone(), 2);
        let a = op(0, pauli_z());
        let err = ray_average(
            &s,
            &a,
            &a,
            &RaySpec::chain(1.0),
            5.0,
            &QuadratureSpec::default(),
            &eng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SafeWindowExceeded(_)));
    }

    #[test]
    fn argument_validation() {
        let eng = precession();
        let s = State::tracial(eng.volume().clone(), 2);
        let a = op(0, pauli_z());
        let quad = QuadratureSpec::default();
        assert!(ray_average(&s, &a, &a, &RaySpec::chain(0.0), 0.0, &quad, &eng).is_err());
        assert!(ray_average(
            &s,
            &a,
            &a,
            &RaySpec::chain(0.0),
            1.0,
            &QuadratureSpec::uniform(0.5, 8),
            &eng
        )
        .is_err());
        assert!(ray_average(
            &s,
            &a,
            &a,
            &RaySpec::chain(0.0),
            1.0,
            &QuadratureSpec::uniform(0.05, 8),
            &eng
        )
        .is_ok());
        let mut bad = RaySpec::chain(0.0);
        bad.k = Some(vec![1.0]);
        assert!(bad.validate().is_err());
        assert!(RaySpec::chain(0.0).with_phase(vec![1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn moment_examples() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.3).unwrap();
        let quad = QuadratureSpec::default();
        let ray = RaySpec::chain(0.7);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        for n in 1..4 {
            assert!((moment(&s, &id, &ray, 2.0, n, &quad, &eng).unwrap() - 1.0).norm() < 1e-12);
        }
        let a = op(0, pauli_x());
        let m1 = moment(&s, &a, &ray, 2.0, 1, &quad, &eng).unwrap();
        let r = ray_average(&s, &a, &id, &ray, 2.0, &quad, &eng).unwrap();
        assert!((m1 - r.value).norm() < 1e-9);
        let m2 = moment(&s, &a, &ray, 2.0, 2, &quad, &eng).unwrap();
        let ms = mean_square(&s, &a, &a, &ray, 2.0, 2.0, &quad, &eng).unwrap();
        assert!((m2 - ms).norm() < 1e-9);
        assert!(moment(&s, &a, &ray, 2.0, 0, &quad, &eng).is_err());
    }

    #[test]
    fn mean_square_examples() {
        let eng = tfim(2, true);
        let t = State::tracial(eng.volume().clone(), 2);
        let quad = QuadratureSpec::default();
        let ray = RaySpec::chain(0.5);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        assert!(
            (mean_square(&t, &id, &id, &ray, 1.5, 2.5, &quad, &eng).unwrap() - 1.0).norm() < 1e-12
        );
        let b = op(1, pauli_x());
        let g = State::gibbs(&eng, 0.8).unwrap();
        let ms = mean_square(&g, &id, &b, &ray, 1.5, 2.5, &quad, &eng).unwrap();
        let r = ray_average(&g, &b, &id, &ray, 2.5, &quad, &eng).unwrap();
        assert!((ms - r.value).norm() < 1e-9);
        // trace cyclicity: ω(ĀB̄) = conj ω(B̄* Ā*) for the tracial state
        let a = op(0, pauli_z());
        let b = op(1, pauli_y());
        let ab = mean_square(&t, &a, &b, &ray, 1.5, 2.5, &quad, &eng).unwrap();
        let ba = mean_square(&t, &b.adjoint(), &a.adjoint(), &ray, 2.5, 1.5, &quad, &eng).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-9);
    }

    #[test]
    fn multi_point_examples() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.5).unwrap();
        let quad = QuadratureSpec::default();
        let ray = RaySpec::chain(0.8);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let a1 = op(0, pauli_x());
        let a2 = op(1, pauli_z());
        let a3 = op(2, pauli_y());
        let got = multi_ray_average(
            &s,
            &[a1.clone(), a2.clone(), a3.clone()],
            &[id.clone(), id.clone()],
            &ray,
            &[1.0, 2.0],
            &quad,
            &eng,
        )
        .unwrap();
        let exact = s
            .expect(&a1.compose(&a2).unwrap().compose(&a3).unwrap())
            .unwrap();
        assert!((got - exact).norm() < 1e-12);
        let b = op(1, pauli_x());
        let n1 = multi_ray_average(
            &s,
            &[id.clone(), id.clone()],
            std::slice::from_ref(&b),
            &ray,
            &[2.0],
            &quad,
            &eng,
        )
        .unwrap();
        assert!((n1 - moment(&s, &b, &ray, 2.0, 1, &quad, &eng).unwrap()).norm() < 1e-12);
        let b2 = op(0, pauli_z());
        let n2 = multi_ray_average(
            &s,
            &[id.clone(), id.clone(), id.clone()],
            &[b.clone(), b2.clone()],
            &ray,
            &[2.0, 1.5],
            &quad,
            &eng,
        )
        .unwrap();
        let ms = mean_square(&s, &b, &b2, &ray, 2.0, 1.5, &quad, &eng).unwrap();
        assert!((n2 - ms).norm() < 1e-9);
        assert!(multi_ray_average(
            &s,
            std::slice::from_ref(&id),
            &[b],
            &ray,
            &[1.0],
            &quad,
            &eng
        )
        .is_err());
    }

    #[test]
    fn sweep_examples() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.5).unwrap();
        let quad = QuadratureSpec::default();
        let q = RationalDirection::new(Site::from(1)).unwrap();
        let a = op(0, pauli_x());
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let rows = convergence_sweep(
            &s,
            &a,
            &id,
            &q,
            &[0.0, 0.5],
            &[1.0, 2.0, 3.0],
            &SweepMode::Plain,
            &quad,
            &eng,
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        let wa = s.expect(&a).unwrap();
        for row in &rows {
            assert_eq!(row.abs_deviation, (row.value - wa).norm());
            let direct = ray_average(
                &s,
                &a,
                &id,
                &RaySpec::new(q.clone(), row.v),
                row.horizon,
                &quad,
                &eng,
            )
            .unwrap();
            assert_eq!(row.value, direct.value);
        }
        assert_eq!((rows[1].v, rows[1].horizon), (0.0, 2.0));
        assert!(
            convergence_sweep(&s, &a, &id, &q, &[], &[1.0], &SweepMode::Plain, &quad, &eng)
                .is_err()
        );
    }

    #[test]
    fn spacelike_examples() {
        let eng = tfim(6, true);
        let t = State::tracial(eng.volume().clone(), 2);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let b = op(0, pauli_x()).compose(&op(1, pauli_z())).unwrap();
        let g = State::gibbs(&eng, 0.5).unwrap();
        let r = spacelike_probe(&g, &id, &b, &Site::from(1), 2.0, 3, None, &eng).unwrap();
        let wb = g.expect(&b).unwrap();
        assert!(r.partial_means.iter().all(|m| (m - wb).norm() < 1e-12));
        let a = op(0, pauli_z());
        let r = spacelike_probe(&g, &a, &b, &Site::from(1), 2.0, 1, None, &eng).unwrap();
        let direct = g
            .expect(
                &eng.evolve_translated(&a, &Site::from(1), 0.5)
                    .unwrap()
                    .compose(&b)
                    .unwrap(),
            )
            .unwrap();
        assert_eq!(r.terms.len(), 1);
        assert!((r.terms[0] - direct).norm() < 1e-12);
        let r = spacelike_probe(
            &t,
            &a,
            &op(0, pauli_x()),
            &Site::from(1),
            1e9,
            2,
            None,
            &eng,
        )
        .unwrap();
        assert!(r.connected_terms[0].norm() < 1e-6);
        let err = spacelike_probe(&t, &a, &a, &Site::from(2), 1.0, 2, None, &eng).unwrap_err();
        assert!(matches!(err, Error::WrapGuard(_)));
    }

    #[test]
    fn structure_factor_examples() {
        let eng = tfim(4, true);
        let t = State::tracial(eng.volume().clone(), 2);
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let z = op(0, pauli_z());
        assert_eq!(
            structure_factor(&t, &id, &z, &[0.3], 0.7, &eng).unwrap(),
            ZERO
        );
        let s0 = structure_factor(&t, &z, &z, &[0.0], 0.0, &eng).unwrap();
        assert!((s0 - 1.0).norm() < 1e-12);
        let a = op(0, pauli_x()).add(&op(1, pauli_z())).unwrap();
        for k in [0.4, 1.3] {
            let p = structure_factor(&t, &a, &a, &[k], 0.9, &eng).unwrap();
            let m = structure_factor(&t, &a, &a, &[-k], 0.9, &eng).unwrap();
            assert!((m - p.conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn euler_examples() {
        let eng = tfim(3, true);
        let g = State::gibbs(&eng, 0.4).unwrap();
        let quad = QuadratureSpec::default();
        let id = LocalOperator::identity(Region::chain([0]), 2);
        let z = op(0, pauli_z());
        assert_eq!(
            euler_scale_average(&g, &id, &z, &[0.5], 3.0, 1.0, &quad, &eng)
                .unwrap()
                .value,
            ZERO
        );
        assert_eq!(
            euler_scale_average(&g, &z, &id, &[0.5], 3.0, 1.0, &quad, &eng)
                .unwrap()
                .value,
            ZERO
        );
        let x = op(1, pauli_x());
        let r = euler_scale_average(&g, &z, &x, &[0.0], 3.0, 1.0, &quad, &eng).unwrap();
        assert_eq!(r.t_min, 1.0);
        let nodes = quadrature::composite(&quadrature::panels(1.0, 3.0, 0.05), 10);
        let mut direct = ZERO;
        for (t, w) in nodes {
            direct += structure_factor(&g, &z, &x, &[0.0], t, &eng).unwrap() * w;
        }
        assert!((r.value - direct / 2.0).norm() < 1e-8);
        assert!(euler_scale_average(&g, &z, &x, &[0.0], 1.0, 1.0, &quad, &eng).is_err());
    }

    #[test]
    fn commutator_average_of_disjoint_static_pair_vanishes() {
        let eng = precession();
        let s = State::tracial(eng.volume().clone(), 2);
        let a = op(0, pauli_z());
        let b = op(1, pauli_x());
        let r = commutator_ray_average(
            &s,
            &a,
            &b,
            &RaySpec::chain(0.0),
            2.0,
            &QuadratureSpec::default(),
            &eng,
        )
        .unwrap();
        assert!(r.value.norm() < 1e-14);
    }

    #[test]
    fn refinement_is_within_estimate() {
        let eng = tfim(3, true);
        let s = State::gibbs(&eng, 0.6).unwrap();
        let a = op(0, pauli_x());
        let b = op(1, pauli_z());
        for quad in [
            QuadratureSpec::breakpoint_exact(4),
            QuadratureSpec::uniform(0.2, 4),
        ] {
            let ray = RaySpec::chain(1.1);
            let r = ray_average(&s, &a, &b, &ray, 3.0, &quad, &eng).unwrap();
            let fine = ray_average(&s, &a, &b, &ray, 3.0, &quad.with_order(8), &eng).unwrap();
            assert!((fine.value - r.value).norm() < r.estimated_quadrature_error);
        }
    }
}
