//! Gauss-Legendre rules and adaptive quadrature.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "empty quadrature rule");
    if n == 1 {
        return (vec![0.5], vec![1.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    (x, w)
}

/// Fixed rule on `[a, b]` with precomputed unit nodes.
pub fn fixed(f: &impl Fn(f64) -> f64, a: f64, b: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (x, w) = nodes;
    let len = b - a;
    x.iter().zip(w).map(|(&t, &wt)| wt * f(a + len * t)).sum::<f64>() * len
}

/// Adaptive bisection with a 10-point/20-point Gauss pair.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let lo = gauss_legendre(10);
    let hi = gauss_legendre(20);
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
        lo: &(Vec<f64>, Vec<f64>),
        hi: &(Vec<f64>, Vec<f64>),
    ) -> f64 {
        let coarse = fixed(f, a, b, lo);
        let fine = fixed(f, a, b, hi);
        if (fine - coarse).abs() <= tol || depth >= 40 {
            return fine;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1, lo, hi) + rec(f, m, b, 0.5 * tol, depth + 1, lo, hi)
    }
    if a == b {
        return 0.0;
    }
    rec(&f, a, b, tol, 0, &lo, &hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(t, wt)| wt * t.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn adaptive_matches_closed_forms() {
        let v = adaptive(|t| t.cosh(), 0.0, 0.3, 1e-14);
        assert!((v - 0.3f64.sinh()).abs() < 1e-14);
        let v = adaptive(|t| t.abs().sqrt(), -1.0, 1.0, 1e-12);
        assert!((v - 4.0 / 3.0).abs() < 1e-10);
    }
}
