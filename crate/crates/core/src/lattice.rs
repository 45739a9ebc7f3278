//! Geometry of the finite emulation of ℤ^D.
//!
//! [`Site`] and [`Region`] carry the raw infinite-lattice geometry; a
//! [`Torus`] fixes the finite box every experiment lives in and supplies the
//! boundary-aware metric (wrapped per-axis ℓ₁ on periodic boxes).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Breakpoints closer than this are merged.
pub const BREAKPOINT_DEDUP_TOL: f64 = 1e-12;

/// A point of ℤ^D in lattice units.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        let coords = coords.into();
        assert!(!coords.is_empty(), "lattice dimension must be at least 1");
        Site(coords)
    }

    pub fn zero(dim: usize) -> Self {
        Site::new(vec![0; dim])
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut c = vec![0; dim];
        c[axis] = 1;
        Site(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn add(&self, other: &Site) -> Site {
        debug_assert_eq!(self.dim(), other.dim());
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        debug_assert_eq!(self.dim(), other.dim());
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, m: i64) -> Site {
        Site(self.0.iter().map(|c| c * m).collect())
    }

    pub fn neg(&self) -> Site {
        self.scale(-1)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl From<i64> for Site {
    fn from(c: i64) -> Self {
        Site(vec![c])
    }
}

impl<const D: usize> From<[i64; D]> for Site {
    fn from(c: [i64; D]) -> Self {
        Site::new(c.to_vec())
    }
}

/// ℓ₁ norm of a lattice vector.
pub fn l1_norm(s: &Site) -> u64 {
    s.l1_norm()
}

/// Finite, lexicographically ordered, deduplicated set of sites.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region {
    sites: Vec<Site>,
}

impl Region {
    pub fn new(sites: impl IntoIterator<Item = Site>) -> Self {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort();
        sites.dedup();
        if let Some(first) = sites.first() {
            let d = first.dim();
            assert!(
                sites.iter().all(|s| s.dim() == d),
                "all sites of a region must share the lattice dimension"
            );
        }
        Region { sites }
    }

    pub fn empty() -> Self {
        Region { sites: Vec::new() }
    }

    pub fn singleton(site: Site) -> Self {
        Region { sites: vec![site] }
    }

    /// Sites `0..len` of a one-dimensional chain.
    pub fn chain(sites: impl IntoIterator<Item = i64>) -> Self {
        Region::new(sites.into_iter().map(Site::from))
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.sites.first().map(Site::dim)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Site> {
        self.sites.iter()
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.sites.binary_search(site).is_ok()
    }

    /// Position of `site` in the tensor-factor order.
    pub fn position(&self, site: &Site) -> Option<usize> {
        self.sites.binary_search(site).ok()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    pub fn union(&self, other: &Region) -> Region {
        Region::new(self.sites.iter().chain(other.sites.iter()).cloned())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region {
            sites: self
                .sites
                .iter()
                .filter(|s| other.contains(s))
                .cloned()
                .collect(),
        }
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region {
            sites: self
                .sites
                .iter()
                .filter(|s| !other.contains(s))
                .cloned()
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| !other.contains(s))
    }

    /// Infinite-lattice distance `min |x - y|₁`.
    pub fn dist(&self, other: &Region) -> Result<u64> {
        min_pair(self, other, |a, b| a.sub(b).l1_norm())
    }

    /// Infinite-lattice diameter `max |x - y|₁`.
    pub fn diam(&self) -> Result<u64> {
        max_pair(self, |a, b| a.sub(b).l1_norm())
    }

    /// `{x + n}` on the infinite lattice.
    pub fn translate(&self, n: &Site) -> Region {
        Region::new(self.sites.iter().map(|s| s.add(n)))
    }

    /// Union of closed ℓ₁ balls of radius `r` around each site, on the
    /// infinite lattice.
    pub fn ball_extension(&self, r: u64) -> Region {
        let Some(d) = self.dim() else {
            return Region::empty();
        };
        let offsets = l1_ball_offsets(d, r as i64);
        Region::new(
            self.sites
                .iter()
                .flat_map(|s| offsets.iter().map(move |o| s.add(o))),
        )
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, s) in self.sites.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a Site;
    type IntoIter = std::slice::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

impl FromIterator<Site> for Region {
    fn from_iter<T: IntoIterator<Item = Site>>(iter: T) -> Self {
        Region::new(iter)
    }
}

fn min_pair(x: &Region, y: &Region, d: impl Fn(&Site, &Site) -> u64) -> Result<u64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(x.iter()
        .flat_map(|a| y.iter().map(move |b| (a, b)))
        .map(|(a, b)| d(a, b))
        .min()
        .unwrap_or(0))
}

fn max_pair(x: &Region, d: impl Fn(&Site, &Site) -> u64) -> Result<u64> {
    if x.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(x.iter()
        .flat_map(|a| x.iter().map(move |b| (a, b)))
        .map(|(a, b)| d(a, b))
        .max()
        .unwrap_or(0))
}

/// All offsets with `|o|₁ ≤ r` in `d` dimensions.
fn l1_ball_offsets(d: usize, r: i64) -> Vec<Site> {
    fn rec(d: usize, budget: i64, prefix: &mut Vec<i64>, out: &mut Vec<Site>) {
        if prefix.len() == d {
            out.push(Site(prefix.clone()));
            return;
        }
        for c in -budget..=budget {
            prefix.push(c);
            rec(d, budget - c.abs(), prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, r, &mut Vec::with_capacity(d), &mut out);
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// The finite box `∏ [0, L_i)` with either periodic or open boundary.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Torus {
    extent: Vec<usize>,
    boundary: Boundary,
}

impl Torus {
    pub fn new(extent: impl Into<Vec<usize>>, boundary: Boundary) -> Result<Self> {
        let extent = extent.into();
        if extent.is_empty() {
            return Err(Error::InvalidArgument(
                "lattice dimension must be at least 1".into(),
            ));
        }
        if extent.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "extent {extent:?} must be positive on every axis"
            )));
        }
        Ok(Torus { extent, boundary })
    }

    pub fn periodic(extent: impl Into<Vec<usize>>) -> Self {
        Torus::new(extent, Boundary::Periodic).expect("valid extent")
    }

    pub fn open(extent: impl Into<Vec<usize>>) -> Self {
        Torus::new(extent, Boundary::Open).expect("valid extent")
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn num_sites(&self) -> usize {
        self.extent.iter().product()
    }

    fn check_dim(&self, s: &Site) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(Error::LatticeDimMismatch {
                expected: self.dim(),
                got: s.dim(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim()
            && s.coords()
                .iter()
                .zip(&self.extent)
                .all(|(&c, &l)| c >= 0 && (c as usize) < l)
    }

    pub fn contains_region(&self, x: &Region) -> bool {
        x.iter().all(|s| self.contains(s))
    }

    /// Reduce a site into the box (periodic) or reject it (open).
    pub fn wrap(&self, s: &Site) -> Result<Site> {
        self.check_dim(s)?;
        match self.boundary {
            Boundary::Periodic => Ok(Site(
                s.coords()
                    .iter()
                    .zip(&self.extent)
                    .map(|(&c, &l)| c.rem_euclid(l as i64))
                    .collect(),
            )),
            Boundary::Open => {
                if self.contains(s) {
                    Ok(s.clone())
                } else {
                    Err(self.out_of_box(s))
                }
            }
        }
    }

    fn out_of_box(&self, s: &Site) -> Error {
        Error::OutOfBox {
            site: s.to_string(),
            extent: self.extent.clone(),
        }
    }

    /// Every site of the box in lexicographic order.
    pub fn all_sites(&self) -> Region {
        let mut out = Vec::with_capacity(self.num_sites());
        let d = self.dim();
        let mut cur = vec![0i64; d];
        loop {
            out.push(Site(cur.clone()));
            let mut axis = d;
            loop {
                if axis == 0 {
                    return Region { sites: out };
                }
                axis -= 1;
                cur[axis] += 1;
                if (cur[axis] as usize) < self.extent[axis] {
                    break;
                }
                cur[axis] = 0;
            }
        }
    }

    /// Per-axis displacement length, wrapped on periodic boxes.
    fn axis_len(&self, delta: i64, axis: usize) -> u64 {
        match self.boundary {
            Boundary::Open => delta.unsigned_abs(),
            Boundary::Periodic => {
                let l = self.extent[axis] as i64;
                let m = delta.rem_euclid(l);
                m.min(l - m) as u64
            }
        }
    }

    pub fn site_dist(&self, a: &Site, b: &Site) -> u64 {
        a.coords()
            .iter()
            .zip(b.coords())
            .enumerate()
            .map(|(axis, (x, y))| self.axis_len(x - y, axis))
            .sum()
    }

    pub fn dist(&self, x: &Region, y: &Region) -> Result<u64> {
        min_pair(x, y, |a, b| self.site_dist(a, b))
    }

    pub fn diam(&self, x: &Region) -> Result<u64> {
        max_pair(x, |a, b| self.site_dist(a, b))
    }

    pub fn translate_site(&self, s: &Site, n: &Site) -> Result<Site> {
        self.check_dim(n)?;
        self.wrap(&s.add(n))
    }

    /// `{x + n}`, reduced modulo the extent on periodic boxes.
    pub fn translate(&self, x: &Region, n: &Site) -> Result<Region> {
        x.iter()
            .map(|s| self.translate_site(s, n))
            .collect::<Result<Vec<_>>>()
            .map(Region::new)
    }

    /// ℓ₁-ball extension of `x`, intersected with (or wrapped into) the box.
    pub fn ball_extension(&self, x: &Region, r: u64) -> Region {
        let raw = x.ball_extension(r);
        match self.boundary {
            Boundary::Open => raw.iter().filter(|s| self.contains(s)).cloned().collect(),
            Boundary::Periodic => raw.iter().filter_map(|s| self.wrap(s).ok()).collect(),
        }
    }

    /// Minimal-image representative of a displacement: each coordinate in
    /// `(-L/2, L/2]` on periodic boxes, unchanged on open boxes.
    pub fn minimal_image(&self, n: &Site) -> Site {
        match self.boundary {
            Boundary::Open => n.clone(),
            Boundary::Periodic => Site(
                n.coords()
                    .iter()
                    .zip(&self.extent)
                    .map(|(&c, &l)| {
                        let l = l as i64;
                        let m = c.rem_euclid(l);
                        if 2 * m > l {
                            m - l
                        } else {
                            m
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Reduce a displacement modulo the extent (periodic) so that equal
    /// translations compare equal.
    pub fn canonical_shift(&self, n: &Site) -> Site {
        match self.boundary {
            Boundary::Open => n.clone(),
            Boundary::Periodic => self.wrap(n).expect("dimension checked by caller"),
        }
    }

    /// ℓ₁ distance from `x` to the nearest site outside an open box.
    /// `None` on periodic boxes, which have no boundary.
    pub fn distance_to_boundary(&self, x: &Region) -> Option<u64> {
        if self.is_periodic() {
            return None;
        }
        x.iter()
            .flat_map(|s| {
                s.coords()
                    .iter()
                    .zip(&self.extent)
                    .map(|(&c, &l)| (c + 1).min(l as i64 - c).max(0) as u64)
            })
            .min()
    }

    /// Whether a shift of length `|n_i|` per axis stays within half the
    /// extent on every axis.
    pub fn within_half_extent(&self, n: &Site) -> bool {
        n.coords()
            .iter()
            .zip(&self.extent)
            .all(|(&c, &l)| 2 * c.unsigned_abs() <= l as u64)
    }
}

/// Exact rational unit direction `n / |n|₁`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalDirection {
    n: Site,
    /// Reduced fractions `(numerator, denominator)` of `n_i / |n|₁`.
    unit: Vec<(i64, u64)>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl RationalDirection {
    pub fn new(n: Site) -> Result<Self> {
        let norm = n.l1_norm();
        if norm == 0 {
            return Err(Error::InvalidArgument(
                "direction vector must be non-zero".into(),
            ));
        }
        let unit = n
            .coords()
            .iter()
            .map(|&c| {
                let g = gcd(c.unsigned_abs(), norm).max(1);
                (c / g as i64, norm / g)
            })
            .collect();
        Ok(RationalDirection { n, unit })
    }

    pub fn vector(&self) -> &Site {
        &self.n
    }

    pub fn dim(&self) -> usize {
        self.n.dim()
    }

    pub fn unit_fractions(&self) -> &[(i64, u64)] {
        &self.unit
    }

    pub fn unit(&self) -> Vec<f64> {
        self.unit
            .iter()
            .map(|&(p, q)| p as f64 / q as f64)
            .collect()
    }

    /// `|unit|₁` as an exact fraction; always `(1, 1)`.
    pub fn unit_l1(&self) -> (u64, u64) {
        self.unit.iter().fold((0u64, 1u64), |(an, ad), &(p, q)| {
            let num = an * q + p.unsigned_abs() * ad;
            let den = ad * q;
            let g = gcd(num, den).max(1);
            (num / g, den / g)
        })
    }
}

/// Per-axis rate `v · unit_i`; computed as `v·n_i/|n|₁` to keep integer
/// products exact.
fn axis_rates(v: f64, q: &RationalDirection) -> Vec<f64> {
    q.unit
        .iter()
        .map(|&(p, d)| v * p as f64 / d as f64)
        .collect()
}

/// `⌊v · unit(q) · t⌋` componentwise.
pub fn ray_point(v: f64, q: &RationalDirection, t: f64) -> Site {
    Site(
        q.unit
            .iter()
            .map(|&(p, d)| ((v * t * p as f64) / d as f64).floor() as i64)
            .collect(),
    )
}

/// Times in `(0, T)` at which some component of `v·unit(q)·t` crosses an
/// integer, sorted and merged within [`BREAKPOINT_DEDUP_TOL`].
pub fn ray_breakpoints(v: f64, q: &RationalDirection, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(horizon > 0.0) || v == 0.0 || !v.is_finite() {
        return out;
    }
    for rate in axis_rates(v, q) {
        let r = rate.abs();
        if r == 0.0 {
            continue;
        }
        let mut m = 1u64;
        loop {
            let t = m as f64 / r;
            if t >= horizon - BREAKPOINT_DEDUP_TOL {
                break;
            }
            out.push(t);
            m += 1;
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|b, a| (*b - *a).abs() <= BREAKPOINT_DEDUP_TOL);
    out
}
