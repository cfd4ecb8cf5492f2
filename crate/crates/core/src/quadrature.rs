//! Gauss–Legendre rules and their tensor products over chart boxes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::cos;

/// Nodes per axis used when a configuration does not say otherwise.
pub const DEFAULT_NODES_PER_AXIS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `order`-point rule on `[-1, 1]`; Newton iteration on the Legendre
    /// polynomial starting from the Chebyshev-like initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss–Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = cos(PI * (i as f64 + 0.75) / (n + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped affinely onto `[lo, hi]`.
    pub fn on_interval(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes = self.nodes.iter().map(|x| mid + half * x).collect();
        let weights = self.weights.iter().map(|w| half * w).collect();
        (nodes, weights)
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if order == 0 { 1.0 } else { p1 };
    let d = order as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Tensor-product nodes over a box; returns `(points, weights)` with the last
/// axis varying fastest.
pub fn tensor_rule(bounds: &[(f64, f64)], order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rule = GaussLegendre::new(order);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = bounds
        .iter()
        .map(|&(lo, hi)| rule.on_interval(lo, hi))
        .collect();
    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (xs, ws) in &axes {
        let mut next_p = Vec::with_capacity(points.len() * xs.len());
        let mut next_w = Vec::with_capacity(points.len() * xs.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, wx) in xs.iter().zip(ws) {
                let mut q = p.clone();
                q.push(*x);
                next_p.push(q);
                next_w.push(w * wx);
            }
        }
        points = next_p;
        weights = next_w;
    }
    (points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sin;

    #[test]
    fn low_order_rules_match_closed_forms() {
        let r = GaussLegendre::new(2);
        let x = 1.0 / libm::sqrt(3.0);
        assert!((r.nodes[0] + x).abs() < 1e-15 && (r.nodes[1] - x).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);

        let r = GaussLegendre::new(3);
        assert!((r.nodes[2] - libm::sqrt(0.6)).abs() < 1e-15);
        assert!(r.nodes[1].abs() < 1e-16);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn integrates_polynomials_exactly_up_to_degree_2n_minus_1() {
        for order in [1usize, 4, 9, 32] {
            let r = GaussLegendre::new(order);
            for deg in 0..2 * order {
                let q: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * libm::pow(*x, deg as f64))
                    .sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "order {order} deg {deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn nodes_stay_strictly_inside_the_interval() {
        let r = GaussLegendre::new(32);
        let (xs, _) = r.on_interval(0.0, PI);
        assert!(xs.iter().all(|&x| x > 0.0 && x < PI));
    }

    #[test]
    fn tensor_rule_integrates_sphere_area() {
        let (pts, ws) = tensor_rule(&[(0.0, PI), (0.0, 2.0 * PI)], 16);
        let area: f64 = pts.iter().zip(&ws).map(|(p, w)| w * sin(p[0])).sum();
        assert!((area - 4.0 * PI).abs() < 1e-12);
        assert_eq!(pts.len(), 256);
    }
}
