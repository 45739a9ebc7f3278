//! Gauss-Legendre rules, composite panels and adaptive bisection.

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights of `rule` mapped onto `[a, b]`, appended to `out`.
pub fn map_rule(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        out.push((mid + half * x, half * w));
    }
}

/// Splits `[a, b]` into the fewest equal panels of width at most `max_width`.
pub fn panels(a: f64, b: f64, max_width: f64) -> Vec<(f64, f64)> {
    let len = b - a;
    if !(len > 0.0) {
        return Vec::new();
    }
    let m = if max_width.is_finite() && max_width > 0.0 {
        ((len / max_width).ceil() as usize).max(1)
    } else {
        1
    };
    (0..m)
        .map(|i| {
            let lo = a + len * i as f64 / m as f64;
            let hi = if i + 1 == m {
                b
            } else {
                a + len * (i + 1) as f64 / m as f64
            };
            (lo, hi)
        })
        .collect()
}

/// Composite rule of the given order over the panels.
pub fn composite(panels: &[(f64, f64)], order: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let mut out = Vec::with_capacity(panels.len() * order);
    for &(a, b) in panels {
        map_rule(&rule, a, b, &mut out);
    }
    out
}

/// Result of [`adaptive`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveResult {
    pub integral: C64,
    pub error: f64,
    pub intervals: usize,
}

/// Adaptive bisection: an interval is accepted once the order-`p` rule and
/// the sum over its two halves agree to `tol · len / (b − a)`. Intervals are
/// processed left to right, so the result is deterministic.
pub fn adaptive<F>(
    f: F,
    a: f64,
    b: f64,
    order: usize,
    tol: f64,
    max_depth: u32,
) -> crate::Result<AdaptiveResult>
where
    F: Fn(f64) -> crate::Result<C64>,
{
    let rule = gauss_legendre(order);
    let apply = |lo: f64, hi: f64| -> crate::Result<C64> {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            acc += f(mid + half * x)? * (half * w);
        }
        Ok(acc)
    };
    let total = b - a;
    let mut stack = vec![(a, b, apply(a, b)?, 0u32)];
    let mut integral = C64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut intervals = 0;
    while let Some((lo, hi, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = apply(lo, mid)?;
        let right = apply(mid, hi)?;
        let fine = left + right;
        let diff = (fine - coarse).norm();
        if diff <= tol * (hi - lo) / total || depth >= max_depth {
            integral += fine;
            error += diff;
            intervals += 1;
        } else {
            // right pushed first so the left half is refined next
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(AdaptiveResult {
        integral,
        error,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_tables() {
        let (x, w) = gauss_legendre(1);
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - 2.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn exact_on_polynomials() {
        for order in 1..=20 {
            let (x, w) = gauss_legendre(order);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for deg in 0..2 * order {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((got - exact).abs() < 1e-13, "order {order} degree {deg}");
            }
        }
    }

    #[test]
    fn composite_integrates_oscillation() {
        let p = panels(0.0, 10.0, 0.5);
        assert_eq!(p.len(), 20);
        assert_eq!(p.last().unwrap().1, 10.0);
        let nodes = composite(&p, 8);
        let got: f64 = nodes.iter().map(|&(t, w)| w * (3.0 * t).cos()).sum();
        assert!((got - (30f64).sin() / 3.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_steep_integrand() {
        let r = adaptive(
            |t| Ok(C64::new((1.0 / t).cos() / (t * t), 0.0)),
            0.05,
            2.0,
            8,
            1e-12,
            40,
        )
        .unwrap();
        let exact = (20f64).sin() - (0.5f64).sin();
        assert!((r.integral.re - exact).abs() < 1e-10);
        assert!(r.intervals > 1);
    }
}
