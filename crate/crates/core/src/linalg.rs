//! Dense complex kernels shared by the operator, dynamics and state layers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `a · b` through the blocked complex GEMM kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: nalgebra's dense storage is contiguous column-major, so element
    // (i, j) lives at offset i + j·nrows; all three buffers are sized m·k,
    // k·n and m·n respectively and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [ONE.re, ONE.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [ZERO.re, ZERO.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// `u · x · u*`.
#[cfg(test)]
pub fn from_basis(u: &CMat, x: &CMat) -> CMat {
    matmul(&matmul(u, x), &u.adjoint())
}

/// `tr(a · b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(b.ncols(), n);
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Largest entrywise modulus.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `max |a - a*|` entrywise.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut d: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    d
}

fn is_real(a: &CMat) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut vals: Vec<f64> = if is_real(a) {
        a.map(|z| z.re)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect()
    } else {
        a.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(f64::total_cmp);
    vals
}

/// Hermitian eigendecomposition with eigenvalues ascending and eigenvector
/// columns ordered to match.
pub fn hermitian_eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let (vals, vecs): (DVector<f64>, CMat) = if is_real(a) {
        let e = a.map(|z| z.re).symmetric_eigen();
        (e.eigenvalues, e.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let e = a.clone().symmetric_eigen();
        (e.eigenvalues, e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = CMat::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    if a.nrows() == a.ncols() {
        let tol = 1e-13 * scale;
        if hermiticity_defect(a) <= tol {
            let h = (a + a.adjoint()).scale(0.5);
            return abs_extreme(&hermitian_eigenvalues(&h));
        }
        // anti-Hermitian: i·a is Hermitian
        let ia = a.map(|z| z * C64::i());
        if hermiticity_defect(&ia) <= tol {
            let h = (&ia + ia.adjoint()).scale(0.5);
            return abs_extreme(&hermitian_eigenvalues(&h));
        }
    }
    let gram = matmul(&a.adjoint(), a);
    let gram = (&gram + gram.adjoint()).scale(0.5);
    hermitian_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

fn abs_extreme(vals: &[f64]) -> f64 {
    match (vals.first(), vals.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => 0.0,
    }
}

/// `y[p(i), p(j)] = x[i, j]`.
pub fn permute_basis(x: &CMat, p: &[usize]) -> CMat {
    let n = x.nrows();
    debug_assert_eq!(p.len(), n);
    let mut y = CMat::zeros(n, n);
    for j in 0..n {
        let pj = p[j];
        for i in 0..n {
            y[(p[i], pj)] = x[(i, j)];
        }
    }
    y
}

/// `y[i, j] = x[p(i), p(j)]`, the inverse of [`permute_basis`].
#[cfg(test)]
pub fn unpermute_basis(x: &CMat, p: &[usize]) -> CMat {
    let n = x.nrows();
    CMat::from_fn(n, n, |i, j| x[(p[i], p[j])])
}

/// Kronecker product `a ⊗ b` (a's index most significant).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}
