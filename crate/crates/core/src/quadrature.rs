//! Gauss–Legendre rules and a quadrature for two coordinates of a uniform
//! point on the unit sphere.

use std::f64::consts::{FRAC_PI_2, PI};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
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
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule on `[a, b]`.
pub(crate) fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    x.iter().zip(&w).map(|(xi, wi)| (m + h * xi, h * wi)).collect()
}

/// A point `(t, s)` with weight: `t = ⟨u, v⟩`, `s = ⟨e, v⟩` for orthonormal
/// `u, e` and `v` uniform on the unit sphere in `d` dimensions. Weights sum
/// to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SpherePoint {
    pub t: f64,
    pub s: f64,
    pub weight: f64,
}

/// Product rule for the joint law of `(t, s)`. For `d ≥ 3` it substitutes
/// `t = sin θ` (density `cos^{d-2} θ`) and `s = cos θ · sin φ` (density
/// `cos^{d-3} φ`), which leaves smooth integrands for Gauss–Legendre.
pub(crate) fn sphere_rule(d: usize, nodes: usize) -> Vec<SpherePoint> {
    match d {
        0 => Vec::new(),
        1 => vec![
            SpherePoint { t: 1.0, s: 0.0, weight: 0.5 },
            SpherePoint { t: -1.0, s: 0.0, weight: 0.5 },
        ],
        2 => {
            let m = 2 * nodes;
            (0..m)
                .map(|k| {
                    let psi = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    SpherePoint { t: psi.cos(), s: psi.sin(), weight: 1.0 / m as f64 }
                })
                .collect()
        }
        _ => {
            let theta = gauss_legendre_on(nodes, -FRAC_PI_2, FRAC_PI_2);
            let phi = gauss_legendre_on(nodes, -FRAC_PI_2, FRAC_PI_2);
            let mut pts = Vec::with_capacity(nodes * nodes);
            for &(th, wt) in &theta {
                let wt = wt * th.cos().powi(d as i32 - 2);
                for &(ph, wp) in &phi {
                    let wp = wp * ph.cos().powi(d as i32 - 3);
                    pts.push(SpherePoint { t: th.sin(), s: th.cos() * ph.sin(), weight: wt * wp });
                }
            }
            let total: f64 = pts.iter().map(|p| p.weight).sum();
            for p in &mut pts {
                p.weight /= total;
            }
            pts
        }
    }
}

/// `P(|⟨u, v⟩| ≥ c)` for `v` uniform on the unit sphere in `d` dimensions.
pub(crate) fn sphere_cap_two_sided(d: usize, c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    if c > 1.0 {
        return 0.0;
    }
    match d {
        0 => 0.0,
        1 => 1.0,
        2 => 1.0 - 2.0 * c.asin() / PI,
        _ => {
            let f = |a: f64, b: f64| -> f64 {
                gauss_legendre_on(64, a, b).iter().map(|(x, w)| w * x.cos().powi(d as i32 - 2)).sum()
            };
            let lo = c.asin();
            // split the tail so the integrand stays well resolved near π/2
            let mid = 0.5 * (lo + FRAC_PI_2);
            (f(lo, mid) + f(mid, FRAC_PI_2)) / f(0.0, FRAC_PI_2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((m18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_moments() {
        for d in [1usize, 2, 3, 5, 10] {
            let pts = sphere_rule(d, 48);
            let w: f64 = pts.iter().map(|p| p.weight).sum();
            assert!((w - 1.0).abs() < 1e-13);
            let t2: f64 = pts.iter().map(|p| p.weight * p.t * p.t).sum();
            assert!((t2 - 1.0 / d as f64).abs() < 1e-12, "d={d} t2={t2}");
            if d >= 2 {
                let s2: f64 = pts.iter().map(|p| p.weight * p.s * p.s).sum();
                assert!((s2 - 1.0 / d as f64).abs() < 1e-12);
                let ts: f64 = pts.iter().map(|p| p.weight * p.t * p.s).sum();
                assert!(ts.abs() < 1e-14);
                // E t^4 = 3 / (d (d + 2))
                let t4: f64 = pts.iter().map(|p| p.weight * p.t.powi(4)).sum();
                assert!((t4 - 3.0 / (d * (d + 2)) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_probabilities() {
        assert!((sphere_cap_two_sided(3, 0.5) - 0.5).abs() < 1e-13);
        assert!((sphere_cap_two_sided(2, 0.5) - (1.0 - 1.0 / 3.0)).abs() < 1e-13);
        assert_eq!(sphere_cap_two_sided(10, 0.0), 1.0);
        assert_eq!(sphere_cap_two_sided(10, 1.5), 0.0);
    }
}
