//! Coordinate charts `u ↦ x(u) ∈ S^n` with first and second derivatives.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::ambient::DerivativeKind;
use crate::linalg::{cos, norm, sin, Matrix};

/// Central-difference step (in chart coordinates) for charts without
/// analytic derivatives.
pub const FD_CHART_STEP: f64 = 1e-5;

/// One side of a chart's coordinate box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: false }
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: true }
    }
}

/// Point, Jacobian and (optionally) second derivatives of a chart at `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartJet {
    pub point: Vec<f64>,
    /// `(n+1) × k`
    pub jac: Matrix,
    /// `∂_a ∂_b x` stored at index `a * k + b`.
    pub second: Option<Vec<Vec<f64>>>,
}

pub trait ChartMap: Send + Sync {
    /// Chart dimension `k`.
    fn dim(&self) -> usize;
    /// `n + 1`
    fn ambient_dim(&self) -> usize;
    fn point(&self, u: &[f64]) -> Vec<f64>;
    fn jet(&self, u: &[f64]) -> ChartJet;
    fn derivative_kind(&self) -> DerivativeKind;
}

#[derive(Clone)]
pub struct Chart {
    pub domain: Vec<Axis>,
    pub map: Arc<dyn ChartMap>,
}

impl Chart {
    pub fn new(domain: Vec<Axis>, map: Arc<dyn ChartMap>) -> Self {
        Self { domain, map }
    }

    pub fn derivative_kind(&self) -> DerivativeKind {
        self.map.derivative_kind()
    }
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("domain", &self.domain)
            .field("dim", &self.map.dim())
            .field("ambient_dim", &self.map.ambient_dim())
            .field("derivatives", &self.map.derivative_kind())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    /// Value and first two derivatives at `t`.
    #[inline]
    fn jet(self, t: f64) -> (f64, f64, f64) {
        let (s, c) = (sin(t), cos(t));
        match self {
            Trig::Sin => (s, c, -s),
            Trig::Cos => (c, -s, -c),
        }
    }
}

/// One ambient coordinate `coeff · Π trig_j(u_{axis_j})`, each axis used at
/// most once.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub coeff: f64,
    pub factors: Vec<(usize, Trig)>,
}

impl TrigTerm {
    pub fn constant(coeff: f64) -> Self {
        Self { coeff, factors: Vec::new() }
    }
}

/// Charts whose coordinates are products of sines and cosines of single
/// chart variables: hyperspherical coordinates, their products and scalings.
/// All derivatives are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigProductChart {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl TrigProductChart {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Self {
        debug_assert!(terms
            .iter()
            .all(|t| t.factors.iter().all(|(a, _)| *a < dim)));
        Self { dim, terms }
    }
}

impl ChartMap for TrigProductChart {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ambient_dim(&self) -> usize {
        self.terms.len()
    }

    fn point(&self, u: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| {
                t.factors
                    .iter()
                    .fold(t.coeff, |acc, (axis, trig)| acc * trig.jet(u[*axis]).0)
            })
            .collect()
    }

    fn jet(&self, u: &[f64]) -> ChartJet {
        let k = self.dim;
        let rows = self.terms.len();
        let mut point = vec![0.0; rows];
        let mut jac = Matrix::zeros(rows, k);
        let mut second = vec![vec![0.0; rows]; k * k];
        for (row, term) in self.terms.iter().enumerate() {
            let jets: Vec<(usize, (f64, f64, f64))> = term
                .factors
                .iter()
                .map(|(axis, trig)| (*axis, trig.jet(u[*axis])))
                .collect();
            // product of factor values, with factor `skip_a`/`skip_b` replaced
            let product = |replace: &dyn Fn(usize, (f64, f64, f64)) -> f64| {
                jets.iter()
                    .fold(term.coeff, |acc, (axis, j)| acc * replace(*axis, *j))
            };
            point[row] = product(&|_, j| j.0);
            for (a, _) in &jets {
                let a = *a;
                jac[(row, a)] = product(&|axis, j| if axis == a { j.1 } else { j.0 });
                for (b, _) in &jets {
                    let b = *b;
                    let v = if a == b {
                        product(&|axis, j| if axis == a { j.2 } else { j.0 })
                    } else {
                        product(&|axis, j| {
                            if axis == a || axis == b {
                                j.1
                            } else {
                                j.0
                            }
                        })
                    };
                    second[a * k + b][row] = v;
                }
            }
        }
        ChartJet {
            point,
            jac,
            second: Some(second),
        }
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::Analytic
    }
}

/// A chart known only through its map. Values are radially re-projected onto
/// the sphere before differencing; derivatives use central differences with
/// step [`FD_CHART_STEP`].
pub struct FiniteDifferenceChart {
    dim: usize,
    ambient_dim: usize,
    map: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    step: f64,
    second_order: bool,
}

impl FiniteDifferenceChart {
    pub fn new(
        dim: usize,
        ambient_dim: usize,
        map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            ambient_dim,
            map: Box::new(map),
            step: FD_CHART_STEP,
            second_order: true,
        }
    }

    /// Only first derivatives are produced; second-order quantities then
    /// fail with an unsupported-chart error.
    pub fn first_order_only(mut self) -> Self {
        self.second_order = false;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut x = (self.map)(u);
        let len = norm(&x);
        if len > 0.0 {
            for v in &mut x {
                *v /= len;
            }
        }
        x
    }
}

impl fmt::Debug for FiniteDifferenceChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDifferenceChart")
            .field("dim", &self.dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl ChartMap for FiniteDifferenceChart {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    fn point(&self, u: &[f64]) -> Vec<f64> {
        self.eval(u)
    }

    fn jet(&self, u: &[f64]) -> ChartJet {
        let k = self.dim;
        let h = self.step;
        let rows = self.ambient_dim;
        let center = self.eval(u);
        let mut probe = u.to_vec();
        let mut shifted = |da: (usize, f64), db: (usize, f64)| {
            probe[da.0] += da.1;
            probe[db.0] += db.1;
            let x = self.eval(&probe);
            probe.copy_from_slice(u);
            x
        };
        let mut jac = Matrix::zeros(rows, k);
        let mut second = vec![vec![0.0; rows]; k * k];
        for a in 0..k {
            let plus = shifted((a, h), (a, 0.0));
            let minus = shifted((a, -h), (a, 0.0));
            for r in 0..rows {
                jac[(r, a)] = (plus[r] - minus[r]) / (2.0 * h);
                second[a * k + a][r] = (plus[r] - 2.0 * center[r] + minus[r]) / (h * h);
            }
            if !self.second_order {
                continue;
            }
            for b in a + 1..k {
                let pp = shifted((a, h), (b, h));
                let pm = shifted((a, h), (b, -h));
                let mp = shifted((a, -h), (b, h));
                let mm = shifted((a, -h), (b, -h));
                for r in 0..rows {
                    let v = (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * h * h);
                    second[a * k + b][r] = v;
                    second[b * k + a][r] = v;
                }
            }
        }
        ChartJet {
            point: center,
            jac,
            second: self.second_order.then_some(second),
        }
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::FiniteDifference
    }
}
