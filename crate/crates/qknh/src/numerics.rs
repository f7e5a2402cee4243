//! Shared numerical kernels: Gauss-Legendre quadrature, bracketed root
//! finding, and high-order central differences.
//!
//! The action integrals upstream substitute away their inverse-square-root
//! endpoint singularities, so plain Gauss-Legendre on the transformed
//! variable converges spectrally. Root finding is Brent's method; every
//! caller supplies a genuine bracket.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Nodes are the roots of the Legendre polynomial P_n, found by Newton
/// iteration from the Chebyshev-like initial guess; weights follow from
/// w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2, "rule needs at least 2 nodes");
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        rule.push((-x, w));
    }
    // Mirror the strictly negative half; odd n keeps its single middle node.
    for i in (0..(n - m)).rev() {
        let (x, w) = rule[i];
        rule.push((-x, w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached 64-point rule, the default for action integrals.
pub fn gl64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// Cached 128-point rule, used by convergence checks.
pub fn gl128() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(128))
}

/// Integral of `f` over [a, b] under the given rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for &(x, w) in rule {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Root of `f` inside the bracket [a, b] by Brent's method.
///
/// Panics if f(a) and f(b) do not straddle zero; converges to `tol` in x
/// (plus machine epsilon scaling) or returns the best iterate after 100
/// steps.
pub fn brent<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    assert!(
        fa * fb <= 0.0,
        "brent: bracket does not straddle a root (f({a})={fa}, f({b})={fb})"
    );
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (a, fa);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..100 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    b
}

/// Fourth-order central difference df/dx at `x` with step `h`.
pub fn central_diff_4<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Worker count: QKNH_THREADS if set (>= 1), else the available
/// parallelism.
pub fn thread_cap() -> usize {
    std::env::var("QKNH_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Map f over 0..n on scoped threads; results keep index order, so the
/// output is independent of the worker count.
pub fn par_map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = thread_cap().min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slot) in results.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (j, out) in slot.iter_mut().enumerate() {
                    *out = Some(f(w * chunk + j));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker filled every slot")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn gl_nodes_symmetric_and_weights_sum_to_two() {
        for n in [5, 16, 64] {
            let rule = gauss_legendre(n);
            assert_eq!(rule.len(), n);
            let wsum: f64 = rule.iter().map(|&(_, w)| w).sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-13);
            for i in 0..n {
                assert_abs_diff_eq!(rule[i].0, -rule[n - 1 - i].0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gl_exact_on_high_degree_polynomials() {
        // 64 nodes integrate degree <= 127 exactly; check x^20 on [0, 2].
        let exact = 2f64.powi(21) / 21.0;
        let got = integrate(|x| x.powi(20), 0.0, 2.0, gl64());
        assert_relative_eq!(got, exact, max_relative = 1e-14);
    }

    #[test]
    fn gl_sin_integral() {
        let got = integrate(f64::sin, 0.0, std::f64::consts::PI, gl64());
        assert_abs_diff_eq!(got, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn brent_transcendental_root() {
        let root = brent(|x| x.cos() - x, 0.0, 1.0, 1e-14);
        assert_abs_diff_eq!(root, 0.739_085_133_215_160_6, epsilon = 1e-12);
    }

    #[test]
    fn brent_accepts_endpoint_root() {
        assert_eq!(brent(|x| x, 0.0, 1.0, 1e-14), 0.0);
    }

    #[test]
    fn central_diff_matches_exp() {
        let d = central_diff_4(f64::exp, 0.3, 1e-3);
        assert_relative_eq!(d, 0.3f64.exp(), max_relative = 1e-11);
    }
}
