use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{dot, Matrix};

/// Central-difference step used by [`FiniteDifferenceFactor`].
pub const FD_FACTOR_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DerivativeKind {
    Analytic,
    FiniteDifference,
}

impl DerivativeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DerivativeKind::Analytic => "analytic",
            DerivativeKind::FiniteDifference => "finite-difference",
        }
    }
}

/// A conformal factor `f` on `S^n`, given through an extension `F` to
/// `ℝ^{n+1}` together with the Euclidean gradient and Hessian of `F`.
///
/// Only values on the sphere matter: the spherical derivatives are obtained
/// from the ambient ones by restriction.
pub trait ConformalFactor: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> Matrix;

    fn kind(&self) -> DerivativeKind {
        DerivativeKind::Analytic
    }
}

/// `F ≡ c`; a homothety of the round metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFactor {
    pub c: f64,
}

impl ConstantFactor {
    pub fn new(c: f64) -> Self {
        Self { c }
    }
}

impl ConformalFactor for ConstantFactor {
    fn value(&self, _x: &[f64]) -> f64 {
        self.c
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn hessian(&self, x: &[f64]) -> Matrix {
        Matrix::zeros(x.len(), x.len())
    }
}

/// `F(x) = ε |y|²` where `x = (x', y)` and `y` collects the coordinates from
/// index `split` on. With `split = k + 1` the great sphere `{y = 0}` is a
/// critical set of `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxialFactor {
    pub epsilon: f64,
    pub split: usize,
}

impl AxialFactor {
    pub fn new(epsilon: f64, split: usize) -> Self {
        Self { epsilon, split }
    }
}

impl ConformalFactor for AxialFactor {
    fn value(&self, x: &[f64]) -> f64 {
        self.epsilon * x.iter().skip(self.split).map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| if i >= self.split { 2.0 * self.epsilon * v } else { 0.0 })
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> Matrix {
        let diag: Vec<f64> = (0..x.len())
            .map(|i| if i >= self.split { 2.0 * self.epsilon } else { 0.0 })
            .collect();
        Matrix::from_diagonal(&diag)
    }
}

/// `F(x) = c ⟨a, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightFactor {
    pub scale: f64,
    pub direction: Vec<f64>,
}

impl HeightFactor {
    pub fn new(scale: f64, direction: Vec<f64>) -> Self {
        Self { scale, direction }
    }
}

impl ConformalFactor for HeightFactor {
    fn value(&self, x: &[f64]) -> f64 {
        self.scale * dot(&self.direction, x)
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.direction.iter().map(|a| self.scale * a).collect()
    }

    fn hessian(&self, x: &[f64]) -> Matrix {
        Matrix::zeros(x.len(), x.len())
    }
}

/// `F(x) = c + ⟨a, x⟩ + ½ xᵀ B x` with symmetric `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFactor {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub quadratic: Matrix,
}

impl QuadraticFactor {
    /// Symmetrizes `quadratic`.
    pub fn new(constant: f64, linear: Vec<f64>, quadratic: Matrix) -> Self {
        let n = quadratic.rows();
        let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (quadratic[(i, j)] + quadratic[(j, i)]));
        Self {
            constant,
            linear,
            quadratic: sym,
        }
    }
}

impl ConformalFactor for QuadraticFactor {
    fn value(&self, x: &[f64]) -> f64 {
        self.constant + dot(&self.linear, x) + 0.5 * self.quadratic.bilinear(x, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let bx = self.quadratic.mul_vec(x);
        self.linear.iter().zip(&bx).map(|(a, b)| a + b).collect()
    }

    fn hessian(&self, _x: &[f64]) -> Matrix {
        self.quadratic.clone()
    }
}

/// A factor known only through its values; derivatives of the ambient
/// extension come from central differences with step [`FD_FACTOR_STEP`].
pub struct FiniteDifferenceFactor {
    eval: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    step: f64,
}

impl FiniteDifferenceFactor {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Box::new(eval),
            step: FD_FACTOR_STEP,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

impl fmt::Debug for FiniteDifferenceFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDifferenceFactor")
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl ConformalFactor for FiniteDifferenceFactor {
    fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = self.step;
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                probe[i] = x[i] + h;
                let plus = (self.eval)(&probe);
                probe[i] = x[i] - h;
                let minus = (self.eval)(&probe);
                probe[i] = x[i];
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> Matrix {
        let h = self.step;
        let n = x.len();
        let center = (self.eval)(x);
        let mut probe = x.to_vec();
        let at = |probe: &mut Vec<f64>, i: usize, di: f64, j: usize, dj: f64| {
            probe[i] += di;
            probe[j] += dj;
            let v = (self.eval)(probe);
            probe[i] = x[i];
            probe[j] = x[j];
            v
        };
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let plus = at(&mut probe, i, h, i, 0.0);
            let minus = at(&mut probe, i, -h, i, 0.0);
            m[(i, i)] = (plus - 2.0 * center + minus) / (h * h);
            for j in i + 1..n {
                let pp = at(&mut probe, i, h, j, h);
                let pm = at(&mut probe, i, h, j, -h);
                let mp = at(&mut probe, i, -h, j, h);
                let mm = at(&mut probe, i, -h, j, -h);
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn kind(&self) -> DerivativeKind {
        DerivativeKind::FiniteDifference
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn axial_factor_vanishes_with_gradient_on_the_core_sphere() {
        let f = AxialFactor::new(0.05, 3);
        let x = [0.6, 0.0, 0.8, 0.0, 0.0, 0.0];
        assert_eq!(f.value(&x), 0.0);
        assert!(f.gradient(&x).iter().all(|g| *g == 0.0));
        let h = f.hessian(&x);
        assert_eq!(h[(4, 4)], 0.1);
        assert_eq!(h[(1, 1)], 0.0);
    }

    #[test]
    fn finite_difference_factor_matches_analytic_quadratic() {
        let b = Matrix::from_fn(4, 4, |i, j| 0.1 * (i as f64) - 0.05 * (j as f64) + 0.2);
        let q = QuadraticFactor::new(0.1, alloc::vec![0.3, -0.2, 0.1, 0.05], b);
        let q2 = q.clone();
        let fd = FiniteDifferenceFactor::new(move |x| q2.value(x));
        let x = [0.5, -0.5, 0.5, 0.5];
        assert!(max_abs_diff(&fd.gradient(&x), &q.gradient(&x)) < 1e-9);
        let (hf, ha) = (fd.hessian(&x), q.hessian(&x));
        assert!(hf.max_asymmetry() == 0.0);
        for i in 0..4 {
            for j in 0..4 {
                assert!((hf[(i, j)] - ha[(i, j)]).abs() < 1e-5);
            }
        }
        assert_eq!(fd.kind(), DerivativeKind::FiniteDifference);
    }
}
