//! Dense realization of the quasi-local algebra on a finite volume.
//!
//! A [`LocalOperator`] is a matrix on `⊗_{x ∈ support} ℂ^N` together with its
//! support. Tensor legs follow the lexicographic order of the support sites,
//! the first site being the most significant digit of the basis index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice::{Region, Site, Torus};
use crate::linalg::{self, CMat};

/// Checked `N^k`, rejected beyond `cap`.
pub fn hilbert_dim(site_dim: usize, sites: usize, cap: usize) -> Result<usize> {
    let mut d: u128 = 1;
    for _ in 0..sites {
        d = d.saturating_mul(site_dim as u128);
        if d > cap as u128 {
            return Err(Error::DimCapExceeded {
                dim: full_dim(site_dim, sites),
                cap,
            });
        }
    }
    Ok(d as usize)
}

fn full_dim(site_dim: usize, sites: usize) -> u128 {
    (0..sites).fold(1u128, |acc, _| acc.saturating_mul(site_dim as u128))
}

pub fn pauli_x() -> CMat {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ],
    )
}

pub fn pauli_y() -> CMat {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
        ],
    )
}

pub fn pauli_z() -> CMat {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ],
    )
}

/// Splits indices of a region's Hilbert space into the digits on a
/// sub-region and the digits on its complement.
struct LegSplit {
    /// `(sub index, rest index)` of every full index.
    parts: Vec<(usize, usize)>,
    /// `compose[rest * sub_dim + sub]` = full index.
    compose: Vec<usize>,
    sub_dim: usize,
    rest_dim: usize,
}

impl LegSplit {
    fn new(full: &Region, sub: &Region, n: usize) -> Self {
        let k = full.len();
        let in_sub: Vec<bool> = full.iter().map(|s| sub.contains(s)).collect();
        let ks = in_sub.iter().filter(|&&b| b).count();
        let sub_dim = n.pow(ks as u32);
        let rest_dim = n.pow((k - ks) as u32);
        let dim = sub_dim * rest_dim;
        let mut parts = Vec::with_capacity(dim);
        let mut compose = vec![0usize; dim];
        let mut digits = vec![0usize; k];
        for idx in 0..dim {
            let mut rem = idx;
            for p in (0..k).rev() {
                digits[p] = rem % n;
                rem /= n;
            }
            let (mut s, mut r) = (0usize, 0usize);
            for p in 0..k {
                if in_sub[p] {
                    s = s * n + digits[p];
                } else {
                    r = r * n + digits[p];
                }
            }
            parts.push((s, r));
            compose[r * sub_dim + s] = idx;
        }
        LegSplit {
            parts,
            compose,
            sub_dim,
            rest_dim,
        }
    }
}

/// Map old basis index → new basis index when leg `p` moves to position
/// `new_pos[p]`.
fn leg_permutation(new_pos: &[usize], n: usize) -> Vec<usize> {
    let k = new_pos.len();
    let dim = n.pow(k as u32);
    let mut out = Vec::with_capacity(dim);
    let mut digits = vec![0usize; k];
    for idx in 0..dim {
        let mut rem = idx;
        for p in (0..k).rev() {
            digits[p] = rem % n;
            rem /= n;
        }
        let mut newd = vec![0usize; k];
        for p in 0..k {
            newd[new_pos[p]] = digits[p];
        }
        out.push(newd.iter().fold(0, |acc, &d| acc * n + d));
    }
    out
}

/// Dense operator on the tensor product of `N`-dimensional site spaces over
/// its support.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    support: Region,
    matrix: CMat,
    site_dim: usize,
}

impl LocalOperator {
    pub fn new(support: Region, matrix: CMat, site_dim: usize) -> Result<Self> {
        if site_dim == 0 {
            return Err(Error::InvalidArgument(
                "site dimension must be positive".into(),
            ));
        }
        let dim = full_dim(site_dim, support.len());
        if matrix.nrows() as u128 != dim || matrix.ncols() as u128 != dim {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{} but support {} needs {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                support,
                dim,
                dim
            )));
        }
        Ok(LocalOperator {
            support,
            matrix,
            site_dim,
        })
    }

    pub fn identity(support: Region, site_dim: usize) -> Self {
        let d = site_dim.pow(support.len() as u32);
        LocalOperator {
            support,
            matrix: CMat::identity(d, d),
            site_dim,
        }
    }

    pub fn zero(support: Region, site_dim: usize) -> Self {
        let d = site_dim.pow(support.len() as u32);
        LocalOperator {
            support,
            matrix: CMat::zeros(d, d),
            site_dim,
        }
    }

    /// Scalar multiple of the unit, supported nowhere.
    pub fn scalar(c: C64, site_dim: usize) -> Self {
        LocalOperator {
            support: Region::empty(),
            matrix: CMat::from_element(1, 1, c),
            site_dim,
        }
    }

    pub fn single_site(site: Site, matrix: CMat) -> Result<Self> {
        let n = matrix.nrows();
        LocalOperator::new(Region::singleton(site), matrix, n)
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    /// Hilbert-space dimension of the support.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_site_dim(&self, other: &LocalOperator) -> Result<()> {
        if self.site_dim != other.site_dim {
            return Err(Error::DimensionMismatch {
                expected: self.site_dim,
                got: other.site_dim,
            });
        }
        Ok(())
    }

    /// Inclusion into the algebra of a larger region: tensor with the
    /// identity on `region ∖ support`.
    pub fn embed(&self, region: &Region) -> Result<LocalOperator> {
        if !self.support.is_subset(region) {
            return Err(Error::SupportNotContained {
                support: self.support.to_string(),
                region: region.to_string(),
            });
        }
        if region == &self.support {
            return Ok(self.clone());
        }
        let dim = hilbert_dim(self.site_dim, region.len(), crate::dim_cap())?;
        let split = LegSplit::new(region, &self.support, self.site_dim);
        let mut m = CMat::zeros(dim, dim);
        for i in 0..dim {
            let (si, ri) = split.parts[i];
            let base = ri * split.sub_dim;
            for a in 0..split.sub_dim {
                let v = self.matrix[(si, a)];
                if v != C64::new(0.0, 0.0) {
                    m[(i, split.compose[base + a])] = v;
                }
            }
        }
        Ok(LocalOperator {
            support: region.clone(),
            matrix: m,
            site_dim: self.site_dim,
        })
    }

    fn lift_pair(&self, other: &LocalOperator) -> Result<(CMat, CMat, Region)> {
        self.check_site_dim(other)?;
        let common = self.support.union(&other.support);
        let a = self.embed(&common)?.matrix;
        let b = other.embed(&common)?.matrix;
        Ok((a, b, common))
    }

    /// Operator product `self · other` on the union of supports.
    pub fn compose(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b, common) = self.lift_pair(other)?;
        Ok(LocalOperator {
            support: common,
            matrix: linalg::matmul(&a, &b),
            site_dim: self.site_dim,
        })
    }

    pub fn add(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b, common) = self.lift_pair(other)?;
        Ok(LocalOperator {
            support: common,
            matrix: a + b,
            site_dim: self.site_dim,
        })
    }

    pub fn sub(&self, other: &LocalOperator) -> Result<LocalOperator> {
        let (a, b, common) = self.lift_pair(other)?;
        Ok(LocalOperator {
            support: common,
            matrix: a - b,
            site_dim: self.site_dim,
        })
    }

    pub fn scale(&self, c: C64) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            matrix: self.matrix.map(|z| z * c),
            site_dim: self.site_dim,
        }
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            matrix: self.matrix.adjoint(),
            site_dim: self.site_dim,
        }
    }

    /// `[A, B] = AB − BA`. Operators on disjoint supports give the exact
    /// zero matrix on the union.
    pub fn commutator(&self, other: &LocalOperator) -> Result<LocalOperator> {
        self.check_site_dim(other)?;
        if self.support.is_disjoint(&other.support) {
            let common = self.support.union(&other.support);
            hilbert_dim(self.site_dim, common.len(), crate::dim_cap())?;
            return Ok(LocalOperator::zero(common, self.site_dim));
        }
        let (a, b, common) = self.lift_pair(other)?;
        let m = linalg::matmul(&a, &b) - linalg::matmul(&b, &a);
        Ok(LocalOperator {
            support: common,
            matrix: m,
            site_dim: self.site_dim,
        })
    }

    /// Operator norm (largest singular value).
    pub fn norm(&self) -> f64 {
        linalg::spectral_norm(&self.matrix)
    }

    /// `Some(c)` when the matrix is exactly `c·I`.
    pub fn as_scalar(&self) -> Option<C64> {
        let m = &self.matrix;
        let c = m[(0, 0)];
        let zero = C64::new(0.0, 0.0);
        let exact = (0..m.ncols())
            .all(|j| (0..m.nrows()).all(|i| m[(i, j)] == if i == j { c } else { zero }));
        exact.then_some(c)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `max |A − A*|` entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Space translation `ι_n`: same matrix, support shifted (and wrapped on
    /// periodic boxes), tensor legs reordered to the new lexicographic order.
    pub fn translate(&self, torus: &Torus, n: &Site) -> Result<LocalOperator> {
        if n.is_zero() {
            return Ok(self.clone());
        }
        let moved: Vec<Site> = self
            .support
            .iter()
            .map(|s| torus.translate_site(s, n))
            .collect::<Result<_>>()?;
        let new_support = Region::new(moved.iter().cloned());
        if new_support.len() != self.support.len() {
            return Err(Error::InvalidArgument(format!(
                "translation by {n} is not injective on {}",
                self.support
            )));
        }
        let new_pos: Vec<usize> = moved
            .iter()
            .map(|s| new_support.position(s).expect("translated site present"))
            .collect();
        let matrix = if new_pos.iter().enumerate().all(|(p, &q)| p == q) {
            self.matrix.clone()
        } else {
            let perm = leg_permutation(&new_pos, self.site_dim);
            linalg::permute_basis(&self.matrix, &perm)
        };
        Ok(LocalOperator {
            support: new_support,
            matrix,
            site_dim: self.site_dim,
        })
    }

    /// Normalized partial trace onto `region ⊆ support`, returned as an
    /// operator supported on `region`.
    pub fn reduce_to(&self, region: &Region) -> Result<LocalOperator> {
        if !region.is_subset(&self.support) {
            return Err(Error::SupportNotContained {
                support: region.to_string(),
                region: self.support.to_string(),
            });
        }
        if region == &self.support {
            return Ok(self.clone());
        }
        let split = LegSplit::new(&self.support, region, self.site_dim);
        let sd = split.sub_dim;
        let norm = 1.0 / split.rest_dim as f64;
        let mut y = CMat::zeros(sd, sd);
        for r in 0..split.rest_dim {
            let base = r * sd;
            for b in 0..sd {
                let jb = split.compose[base + b];
                for a in 0..sd {
                    y[(a, b)] += self.matrix[(split.compose[base + a], jb)];
                }
            }
        }
        y.iter_mut().for_each(|z| *z *= norm);
        Ok(LocalOperator {
            support: region.clone(),
            matrix: y,
            site_dim: self.site_dim,
        })
    }

    /// Tracial conditional expectation onto the algebra of `region`:
    /// normalized partial trace over `support ∖ region`, tensored back with
    /// the identity. If `region` reaches outside the support the operator is
    /// embedded first; the result lives on `support ∪ region`.
    pub fn localize(&self, region: &Region) -> Result<LocalOperator> {
        let host = self.support.union(region);
        let lifted = self.embed(&host)?;
        let keep = region.intersection(&host);
        lifted.reduce_to(&keep)?.embed(&host)
    }
}

impl fmt::Display for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LocalOperator(support={}, N={}, dim={})",
            self.support,
            self.site_dim,
            self.dim()
        )
    }
}

/// Single-site factor of a [`PauliString`].
#[derive(Clone, Debug, PartialEq)]
pub enum SiteMatrix {
    I,
    X,
    Y,
    Z,
    Explicit(CMat),
}

impl SiteMatrix {
    pub fn matrix(&self, site_dim: usize) -> Result<CMat> {
        let pauli = |m: CMat| {
            if site_dim == 2 {
                Ok(m)
            } else {
                Err(Error::DimensionMismatch {
                    expected: site_dim,
                    got: 2,
                })
            }
        };
        match self {
            SiteMatrix::I => Ok(CMat::identity(site_dim, site_dim)),
            SiteMatrix::X => pauli(pauli_x()),
            SiteMatrix::Y => pauli(pauli_y()),
            SiteMatrix::Z => pauli(pauli_z()),
            SiteMatrix::Explicit(m) => {
                if m.nrows() != site_dim || m.ncols() != site_dim {
                    Err(Error::DimensionMismatch {
                        expected: site_dim,
                        got: m.nrows(),
                    })
                } else {
                    Ok(m.clone())
                }
            }
        }
    }
}

/// Coefficient times a tensor product of single-site factors.
///
/// Text form: `1.0 * X@(0) Z@(1,0)`. The coefficient (and its `*`) is
/// optional, complex coefficients are written `(0.5-1i)`, and explicit
/// factors for `N > 2` are written `M@(0)=[[1,0,0],[0,0,0],[0,0,-1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliString {
    pub coefficient: C64,
    pub factors: BTreeMap<Site, SiteMatrix>,
}

impl PauliString {
    pub fn new(coefficient: C64) -> Self {
        PauliString {
            coefficient,
            factors: BTreeMap::new(),
        }
    }

    pub fn with(mut self, site: impl Into<Site>, m: SiteMatrix) -> Self {
        self.factors.insert(site.into(), m);
        self
    }

    pub fn support(&self) -> Region {
        Region::new(self.factors.keys().cloned())
    }

    pub fn to_operator(&self, site_dim: usize) -> Result<LocalOperator> {
        let mut m = CMat::from_element(1, 1, self.coefficient);
        for factor in self.factors.values() {
            m = linalg::kron(&m, &factor.matrix(site_dim)?);
        }
        LocalOperator::new(self.support(), m, site_dim)
    }
}

fn fmt_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficient.im == 0.0 {
            write!(f, "{}", self.coefficient.re)?;
        } else {
            write!(f, "({})", fmt_complex(self.coefficient))?;
        }
        if !self.factors.is_empty() {
            f.write_str(" *")?;
        }
        for (site, m) in &self.factors {
            match m {
                SiteMatrix::I => write!(f, " I@{site}")?,
                SiteMatrix::X => write!(f, " X@{site}")?,
                SiteMatrix::Y => write!(f, " Y@{site}")?,
                SiteMatrix::Z => write!(f, " Z@{site}")?,
                SiteMatrix::Explicit(m) => {
                    write!(f, " M@{site}=[")?;
                    for i in 0..m.nrows() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        f.write_str("[")?;
                        for j in 0..m.ncols() {
                            if j > 0 {
                                f.write_str(",")?;
                            }
                            f.write_str(&fmt_complex(m[(i, j)]))?;
                        }
                        f.write_str("]")?;
                    }
                    f.write_str("]")?;
                }
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!(
            "{msg} at column {} in {:?}",
            self.pos + 1,
            self.src
        ))
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if f(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    fn int(&mut self) -> Result<i64> {
        self.skip_ws();
        let tok = self.take_while(|c| c == '-' || c == '+' || c.is_ascii_digit());
        tok.parse()
            .map_err(|_| self.err("expected an integer coordinate"))
    }

    fn site(&mut self) -> Result<Site> {
        self.expect('(')?;
        let mut coords = vec![self.int()?];
        while self.eat(',') {
            coords.push(self.int()?);
        }
        self.expect(')')?;
        Ok(Site::new(coords))
    }

    fn number_token(&mut self) -> &'a str {
        self.skip_ws();
        self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '+' | '-'))
    }

    fn complex(&mut self) -> Result<C64> {
        let tok = self.number_token();
        parse_complex(tok).ok_or_else(|| self.err(&format!("invalid number {tok:?}")))
    }

    fn matrix(&mut self) -> Result<CMat> {
        self.expect('[')?;
        let mut rows: Vec<Vec<C64>> = Vec::new();
        loop {
            self.expect('[')?;
            let mut row = vec![self.complex()?];
            while self.eat(',') {
                row.push(self.complex()?);
            }
            self.expect(']')?;
            rows.push(row);
            if !self.eat(',') {
                break;
            }
        }
        self.expect(']')?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(self.err("explicit matrix must be square"));
        }
        Ok(CMat::from_fn(n, n, |i, j| rows[i][j]))
    }
}

/// Parses `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i`.
pub fn parse_complex(tok: &str) -> Option<C64> {
    let tok = tok.trim();
    if tok.is_empty() {
        return None;
    }
    if let Some(body) = tok.strip_suffix('i') {
        // split at the last sign that is not an exponent sign or leading sign
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
                split = Some(k);
                break;
            }
        }
        let imag = |s: &str| -> Option<f64> {
            match s {
                "" | "+" => Some(1.0),
                "-" => Some(-1.0),
                _ => s.parse().ok(),
            }
        };
        match split {
            Some(k) => Some(C64::new(body[..k].parse().ok()?, imag(&body[k..])?)),
            None => Some(C64::new(0.0, imag(body)?)),
        }
    } else {
        tok.parse().ok().map(|re| C64::new(re, 0.0))
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cur = Cursor { src: s, pos: 0 };
        cur.skip_ws();
        let mut coefficient = C64::new(1.0, 0.0);
        let starts_numeric = matches!(cur.peek(), Some(c) if c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | '('));
        if starts_numeric {
            if cur.eat('(') {
                coefficient = cur.complex()?;
                cur.expect(')')?;
            } else {
                coefficient = cur.complex()?;
            }
            cur.eat('*');
        }
        let mut ps = PauliString::new(coefficient);
        loop {
            cur.skip_ws();
            let Some(letter) = cur.peek() else { break };
            cur.pos += letter.len_utf8();
            cur.expect('@')?;
            let site = cur.site()?;
            let m = match letter {
                'I' => SiteMatrix::I,
                'X' => SiteMatrix::X,
                'Y' => SiteMatrix::Y,
                'Z' => SiteMatrix::Z,
                'M' => {
                    cur.expect('=')?;
                    SiteMatrix::Explicit(cur.matrix()?)
                }
                other => return Err(cur.err(&format!("unknown factor letter {other:?}"))),
            };
            if ps.factors.insert(site.clone(), m).is_some() {
                return Err(cur.err(&format!("site {site} appears twice")));
            }
        }
        if let Some(d) = ps.factors.keys().next().map(Site::dim) {
            if ps.factors.keys().any(|s| s.dim() != d) {
                return Err(Error::Parse(format!("mixed lattice dimensions in {s:?}")));
            }
        }
        Ok(ps)
    }
}
