//! Gauss–Legendre rules and composite-panel helpers.

use std::f64::consts::{E, PI};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    /// Nodes on [-1, 1], ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss–Legendre needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            // Newton iteration from the Chebyshev-like initial guess
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let prev = if m == 0 { 0.0 } else { p0 };
    (p, m as f64 * (x * p - prev) / (x * x - 1.0))
}

/// Error model for an `m`-node rule on a panel of width `h` applied to a band-limited
/// integrand of angular frequency `omega`: `(e ω h / (4m))^{2m}`.
pub fn oscillatory_error_estimate(m: usize, h: f64, omega: f64) -> f64 {
    (E * omega * h / (4.0 * m as f64)).powi(2 * m as i32)
}

/// Widest panel for which the estimate above stays below `tol`.
pub fn panel_for_tolerance(m: usize, omega: f64, tol: f64) -> f64 {
    4.0 * m as f64 * tol.powf(1.0 / (2.0 * m as f64)) / (E * omega.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for m in [1, 2, 5, 16, 32] {
            let g = GaussLegendre::new(m);
            let s: f64 = g.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "m = {m}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let g = GaussLegendre::new(8);
        // degree 15 is integrated exactly
        let got = g.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((got - 2f64.powi(16) / 16.0).abs() < 1e-10);
    }

    #[test]
    fn three_point_rule() {
        let g = GaussLegendre::new(3);
        assert!((g.nodes[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((g.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_estimate_is_conservative() {
        let g = GaussLegendre::new(16);
        let omega = 20.0;
        let h = panel_for_tolerance(16, omega, 1e-12);
        let got = g.integrate(0.0, h, |x| (omega * x).cos());
        let want = (omega * h).sin() / omega;
        assert!((got - want).abs() <= 1e-12 * h);
        assert!(oscillatory_error_estimate(16, h, omega) <= 1.0001e-12);
    }
}
