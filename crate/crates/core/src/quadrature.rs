//! Gauss–Legendre and Gauss–Hermite rules.

use std::f64::consts::PI;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial P_n(z) and its derivative.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p1, mut p2) = (1.0, 0.0);
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}

/// n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX {
            let (p1, pp) = legendre(n, z);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= NEWTON_TOL {
                break;
            }
        }
        let pp = legendre(n, z).1;
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    }
}

/// Orthonormal Hermite functions: returns (psi_n(z), psi_{n-1}(z)).
fn hermite_functions(n: usize, z: f64) -> (f64, f64) {
    let (mut p1, mut p2) = (PI.powf(-0.25) * (-0.5 * z * z).exp(), 0.0);
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
    }
    (p1, p2)
}

/// n-point Gauss–Hermite rule for the weight exp(-x^2).
///
/// Roots are bracketed by a sign scan of the scaled Hermite function and
/// polished by bisection, so large n stays stable.
pub fn gauss_hermite(n: usize) -> Rule {
    if n == 0 {
        return Rule { nodes: vec![], weights: vec![] };
    }
    let bound = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let steps = 40 * n + 400;
    let h = 2.0 * bound / steps as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut lo = -bound;
    let mut f_lo = hermite_functions(n, lo).0;
    for k in 1..=steps {
        let hi = -bound + k as f64 * h;
        let f_hi = hermite_functions(n, hi).0;
        if f_hi == 0.0 || f_lo * f_hi < 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = hermite_functions(n, mid).0;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            nodes.push(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    assert_eq!(nodes.len(), n, "Hermite root scan missed roots");
    // symmetrise
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&z| {
            let pp = (2.0 * n as f64).sqrt() * hermite_functions(n, z).1;
            2.0 * (-z * z).exp() / (pp * pp)
        })
        .collect();
    Rule { nodes, weights }
}

/// Rule for E[h(Z)], Z standard normal, keeping nodes with |z| <= cutoff.
pub fn normal_expectation(n: usize, cutoff: f64) -> Rule {
    let base = gauss_hermite(n);
    let scale = 1.0 / PI.sqrt();
    let (nodes, weights) = base
        .nodes
        .iter()
        .zip(&base.weights)
        .map(|(x, w)| (std::f64::consts::SQRT_2 * x, scale * w))
        .filter(|(z, _)| z.abs() <= cutoff)
        .unzip();
    Rule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(10);
        assert!((r.integrate(|_| 1.0) - 2.0).abs() < 1e-14);
        assert!((r.integrate(|x| x.powi(18)) - 2.0 / 19.0).abs() < 1e-14);
        let r = gauss_legendre_on(7, 0.0, 1.0);
        assert!((r.integrate(|x| x.exp()) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        for n in [5, 20, 200] {
            let r = normal_expectation(n, f64::INFINITY);
            assert!((r.integrate(|_| 1.0) - 1.0).abs() < 1e-12, "n={n}");
            assert!((r.integrate(|z| z * z) - 1.0).abs() < 1e-12, "n={n}");
            assert!((r.integrate(|z| z.powi(4)) - 3.0).abs() < 1e-11, "n={n}");
        }
        let r = normal_expectation(200, 8.0);
        assert!((r.integrate(|z| z.cos()) - (-0.5f64).exp()).abs() < 1e-13);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }
}
