//! Closed `k`-dimensional submanifolds of `S^n` given by a chart atlas with
//! tensor-product Gauss–Legendre quadrature.

mod chart;
mod shapes;

pub use chart::{
    Axis, Chart, ChartJet, ChartMap, FiniteDifferenceChart, Trig, TrigProductChart, TrigTerm,
    FD_CHART_STEP,
};
pub use shapes::{make_canonical, make_canonical_with, sphere_volume, ShapeSpec};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ambient::{AmbientPoint, ConformalFactor, ConformalJet, DerivativeKind, TangentVector};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::{axpy, dot, exp, gram_schmidt, norm, pairwise_sum, remove_components, Matrix};
use crate::quadrature::tensor_rule;

/// `|x(u)| = 1` tolerance at quadrature nodes.
pub const CHART_UNIT_TOL: f64 = 1e-10;
/// Residual below which a standard basis vector is discarded while completing
/// the normal frame.
pub const COMPLEMENT_RESIDUAL_TOL: f64 = 1e-8;
/// Relative residual below which the chart Jacobian counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureNode {
    pub chart: usize,
    pub u: Vec<f64>,
    /// Gauss–Legendre weight in chart coordinates (no metric density).
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Immersion {
    label: String,
    k: usize,
    n: usize,
    resolution: usize,
    charts: Vec<Chart>,
    nodes: Vec<QuadratureNode>,
}

/// A g-orthonormal basis of `T_pS^n` whose first `k` vectors span `T_pΣ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame {
    pub point: AmbientPoint,
    pub tangent: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
}

impl AdaptedFrame {
    pub fn k(&self) -> usize {
        self.tangent.len()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.tangent.iter().chain(self.normal.iter())
    }

    /// `w^⊥`: component normal to `Σ` (and tangent to the sphere).
    pub fn normal_part(&self, w: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; w.len()];
        for e in &self.normal {
            axpy(dot(w, e), e, &mut out);
        }
        out
    }

    /// `w^⊤`: component tangent to `Σ`.
    pub fn tangent_part(&self, w: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; w.len()];
        for e in &self.tangent {
            axpy(dot(w, e), e, &mut out);
        }
        out
    }
}

/// Second fundamental form `A(E_i, E_j)` (normal vectors, index `i * k + j`)
/// and mean curvature `H = Σ_i A(E_i, E_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeData {
    k: usize,
    pub second_fundamental: Vec<Vec<f64>>,
    pub mean_curvature: Vec<f64>,
}

impl ShapeData {
    /// From the `k × k` components `A(E_i, E_j)` (row-major); `H` is their trace.
    pub fn new(k: usize, second_fundamental: Vec<Vec<f64>>) -> Result<Self> {
        if second_fundamental.len() != k * k || k == 0 {
            return Err(Error::Dimension(format!(
                "second fundamental form needs {} components, got {}",
                k * k,
                second_fundamental.len()
            )));
        }
        let dim = second_fundamental[0].len();
        let mut h = alloc::vec![0.0; dim];
        for i in 0..k {
            axpy(1.0, &second_fundamental[i * k + i], &mut h);
        }
        Ok(Self {
            k,
            second_fundamental,
            mean_curvature: h,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self, i: usize, j: usize) -> &[f64] {
        &self.second_fundamental[i * self.k + j]
    }

    /// `A(E_i, X)` for `X` tangent to `Σ`.
    pub fn apply(&self, i: usize, x: &[f64], frame: &AdaptedFrame) -> Vec<f64> {
        let mut out = alloc::vec![0.0; x.len()];
        for (j, e) in frame.tangent.iter().enumerate() {
            axpy(dot(x, e), self.a(i, j), &mut out);
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                worst = worst.max(crate::linalg::max_abs_diff(self.a(i, j), self.a(j, i)));
            }
        }
        worst
    }
}

/// Everything first- and second-order about `Σ` at one chart point.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub chart: usize,
    pub u: Vec<f64>,
    pub point: AmbientPoint,
    pub jac: Matrix,
    /// `√det(JᵀJ)`
    pub density: f64,
    pub frame: AdaptedFrame,
    /// Chart-coordinate expression of the tangent frame: `E_i = J c_i`.
    pub coefficients: Vec<Vec<f64>>,
    pub shape: ShapeData,
    pub derivative_kind: DerivativeKind,
}

impl LocalGeometry {
    pub fn k(&self) -> usize {
        self.frame.k()
    }

    /// `n`
    pub fn sphere_dim(&self) -> usize {
        self.point.sphere_dim()
    }
}

/// Integration measure on `Σ`.
#[derive(Clone, Copy)]
pub enum Measure<'a> {
    /// `dg`
    Round,
    /// `dg̃ = e^{kf} dg`
    Conformal(&'a dyn ConformalFactor),
}

impl Immersion {
    pub fn new(
        label: impl Into<String>,
        k: usize,
        n: usize,
        charts: Vec<Chart>,
        resolution: usize,
    ) -> Result<Self> {
        if k < 1 || k + 1 > n {
            return Err(Error::Dimension(format!(
                "submanifold dimension k = {k} must satisfy 1 ≤ k ≤ n − 1 with n = {n}"
            )));
        }
        if resolution < 1 {
            return Err(Error::InvalidArgument("quadrature resolution must be positive".into()));
        }
        for (i, c) in charts.iter().enumerate() {
            if c.map.dim() != k || c.domain.len() != k || c.map.ambient_dim() != n + 1 {
                return Err(Error::Dimension(format!(
                    "chart {i} does not map a {k}-box into ℝ^{}",
                    n + 1
                )));
            }
        }
        let mut imm = Self {
            label: label.into(),
            k,
            n,
            resolution,
            charts,
            nodes: Vec::new(),
        };
        imm.nodes = imm.build_nodes();
        for node in &imm.nodes {
            let x = imm.charts[node.chart].map.point(&node.u);
            let len = norm(&x);
            if (len - 1.0).abs() > CHART_UNIT_TOL {
                return Err(Error::domain(format!(
                    "chart {} leaves the sphere at u = {:?} (|x| = {len})",
                    node.chart, node.u
                )));
            }
        }
        Ok(imm)
    }

    fn build_nodes(&self) -> Vec<QuadratureNode> {
        let mut nodes = Vec::new();
        for (c, chart) in self.charts.iter().enumerate() {
            let bounds: Vec<(f64, f64)> = chart.domain.iter().map(|a| (a.lo, a.hi)).collect();
            let (points, weights) = tensor_rule(&bounds, self.resolution);
            nodes.extend(points.into_iter().zip(weights).map(|(u, weight)| QuadratureNode {
                chart: c,
                u,
                weight,
            }));
        }
        nodes
    }

    /// Same charts with a different number of nodes per axis.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(self.label.clone(), self.k, self.n, self.charts.clone(), resolution)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn nodes(&self) -> &[QuadratureNode] {
        &self.nodes
    }

    pub fn derivative_kind(&self) -> DerivativeKind {
        if self
            .charts
            .iter()
            .all(|c| c.derivative_kind() == DerivativeKind::Analytic)
        {
            DerivativeKind::Analytic
        } else {
            DerivativeKind::FiniteDifference
        }
    }

    fn chart(&self, chart: usize) -> Result<&Chart> {
        self.charts
            .get(chart)
            .ok_or_else(|| Error::InvalidArgument(format!("no chart with index {chart}")))
    }

    pub fn adapted_frame(&self, chart: usize, u: &[f64]) -> Result<AdaptedFrame> {
        let jet = self.chart(chart)?.map.jet(u);
        frame_from_jet(&jet, self.n)
    }

    pub fn second_fundamental_form(
        &self,
        chart: usize,
        u: &[f64],
        frame: &AdaptedFrame,
    ) -> Result<ShapeData> {
        let jet = self.chart(chart)?.map.jet(u);
        let coefficients = frame_coefficients(&jet.jac, frame)?;
        shape_from_jet(&jet, frame, &coefficients)
    }

    pub fn local_geometry(&self, chart: usize, u: &[f64]) -> Result<LocalGeometry> {
        let c = self.chart(chart)?;
        let jet = c.map.jet(u);
        let frame = frame_from_jet(&jet, self.n)?;
        let coefficients = frame_coefficients(&jet.jac, &frame)?;
        let shape = shape_from_jet(&jet, &frame, &coefficients)?;
        let density = density(&jet.jac)?;
        Ok(LocalGeometry {
            chart,
            u: u.to_vec(),
            point: frame.point.clone(),
            jac: jet.jac,
            density,
            frame,
            coefficients,
            shape,
            derivative_kind: c.derivative_kind(),
        })
    }

    pub fn node_geometry(&self, node: usize) -> Result<LocalGeometry> {
        let nd = &self.nodes[node];
        self.local_geometry(nd.chart, &nd.u)
    }

    /// Evaluates `integrand` at every node, in node order.
    pub fn node_values<E, T, F>(&self, exec: &E, integrand: F) -> Result<Vec<T>>
    where
        E: Executor,
        T: Send,
        F: Fn(&LocalGeometry) -> Result<T> + Sync + Send,
    {
        exec.map_indexed(self.nodes.len(), |i| {
            let geom = self.node_geometry(i)?;
            integrand(&geom)
        })
        .into_iter()
        .collect()
    }

    /// Quadrature weight times metric density times measure factor, per node.
    pub fn measure_weights<E: Executor>(&self, exec: &E, measure: Measure<'_>) -> Result<Vec<f64>> {
        let k = self.k as f64;
        exec.map_indexed(self.nodes.len(), |i| {
            let nd = &self.nodes[i];
            let jet = self.charts[nd.chart].map.jet(&nd.u);
            let factor = match measure {
                Measure::Round => 1.0,
                Measure::Conformal(f) => exp(k * f.value(&jet.point)),
            };
            Ok(nd.weight * density(&jet.jac)? * factor)
        })
        .into_iter()
        .collect()
    }

    /// `∫_Σ integrand` against `measure`, summed pairwise in node order.
    pub fn integrate<E, F>(&self, exec: &E, measure: Measure<'_>, integrand: F) -> Result<f64>
    where
        E: Executor,
        F: Fn(&LocalGeometry) -> Result<f64> + Sync + Send,
    {
        let k = self.k as f64;
        let terms: Result<Vec<f64>> = exec
            .map_indexed(self.nodes.len(), |i| {
                let geom = self.node_geometry(i)?;
                let factor = match measure {
                    Measure::Round => 1.0,
                    Measure::Conformal(f) => exp(k * f.value(geom.point.coords())),
                };
                Ok(self.nodes[i].weight * geom.density * factor * integrand(&geom)?)
            })
            .into_iter()
            .collect();
        Ok(pairwise_sum(&terms?))
    }

    /// Round (`f = None`) or conformal `k`-volume.
    pub fn k_volume(&self, f: Option<&dyn ConformalFactor>) -> Result<f64> {
        self.k_volume_in(&crate::Sequential, f)
    }

    pub fn k_volume_in<E: Executor>(&self, exec: &E, f: Option<&dyn ConformalFactor>) -> Result<f64> {
        let measure = f.map_or(Measure::Round, Measure::Conformal);
        Ok(pairwise_sum(&self.measure_weights(exec, measure)?))
    }
}

fn density(jac: &Matrix) -> Result<f64> {
    let l = jac
        .gram()
        .cholesky()
        .ok_or_else(|| Error::DegenerateImmersion("chart metric is not positive definite".into()))?;
    Ok((0..l.rows()).map(|i| l[(i, i)]).product())
}

fn frame_from_jet(jet: &ChartJet, n: usize) -> Result<AdaptedFrame> {
    let point = AmbientPoint::normalize(jet.point.clone())?;
    let columns = jet.jac.columns();
    let scale = columns.iter().map(|c| norm(c)).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::DegenerateImmersion("chart Jacobian vanishes".into()));
    }
    let tangent: Vec<Vec<f64>> = gram_schmidt(&columns, RANK_TOL * scale)
        .ok_or_else(|| Error::DegenerateImmersion("chart Jacobian is rank deficient".into()))?
        .into_iter()
        .map(|t| point.project(&t))
        .collect();

    let ambient = n + 1;
    let mut span: Vec<Vec<f64>> = Vec::with_capacity(ambient);
    span.push(point.coords().to_vec());
    span.extend(tangent.iter().cloned());
    let mut remaining: Vec<usize> = (0..ambient).collect();
    let mut normal = Vec::with_capacity(n - tangent.len());
    while normal.len() < n - tangent.len() {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (slot, &i) in remaining.iter().enumerate() {
            let mut r = crate::linalg::unit(ambient, i);
            remove_components(&mut r, &span);
            remove_components(&mut r, &span);
            let len = norm(&r);
            if len >= COMPLEMENT_RESIDUAL_TOL && best.as_ref().is_none_or(|b| len > b.2) {
                best = Some((slot, r, len));
            }
        }
        let (slot, mut r, len) = best.ok_or_else(|| {
            Error::DegenerateImmersion("could not complete the normal frame".into())
        })?;
        for v in &mut r {
            *v /= len;
        }
        remaining.remove(slot);
        span.push(r.clone());
        normal.push(r);
    }
    Ok(AdaptedFrame {
        point,
        tangent,
        normal,
    })
}

/// Solves `JᵀJ c_i = Jᵀ E_i`.
fn frame_coefficients(jac: &Matrix, frame: &AdaptedFrame) -> Result<Vec<Vec<f64>>> {
    let l = jac
        .gram()
        .cholesky()
        .ok_or_else(|| Error::DegenerateImmersion("chart metric is not positive definite".into()))?;
    Ok(frame
        .tangent
        .iter()
        .map(|e| Matrix::cholesky_solve(&l, &jac.transpose_mul_vec(e)))
        .collect())
}

fn shape_from_jet(
    jet: &ChartJet,
    frame: &AdaptedFrame,
    coefficients: &[Vec<f64>],
) -> Result<ShapeData> {
    let second = jet.second.as_ref().ok_or_else(|| {
        Error::UnsupportedChart("chart provides no second derivatives".into())
    })?;
    let k = frame.k();
    let dim = frame.point.ambient_dim();
    let mut a = Vec::with_capacity(k * k);
    for ci in coefficients {
        for cj in coefficients {
            let mut d = alloc::vec![0.0; dim];
            for (p, cip) in ci.iter().enumerate() {
                for (q, cjq) in cj.iter().enumerate() {
                    axpy(cip * cjq, &second[p * k + q], &mut d);
                }
            }
            // remove the radial part, then the part tangent to Σ
            let mut w = frame.point.project(&d);
            remove_components(&mut w, &frame.tangent);
            a.push(w);
        }
    }
    ShapeData::new(k, a)
}

/// `H̃ = e^{−2f}(H − k ∇^⊥f)`.
pub fn conformal_mean_curvature(
    shape: &ShapeData,
    f: &dyn ConformalFactor,
    frame: &AdaptedFrame,
) -> Result<TangentVector> {
    let jet = ConformalJet::new(f, &frame.point)?;
    Ok(TangentVector::new_unchecked(
        frame.point.clone(),
        conformal_mean_curvature_raw(shape, &jet, frame),
    ))
}

pub(crate) fn conformal_mean_curvature_raw(
    shape: &ShapeData,
    jet: &ConformalJet,
    frame: &AdaptedFrame,
) -> Vec<f64> {
    let k = frame.k() as f64;
    let mut h = shape.mean_curvature.clone();
    axpy(-k, &frame.normal_part(&jet.grad), &mut h);
    let s = exp(-2.0 * jet.value);
    h.iter_mut().for_each(|v| *v *= s);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{AxialFactor, ConstantFactor};
    use crate::linalg::max_abs_diff;
    use alloc::vec;

    #[test]
    fn great_sphere_frame_is_standard() {
        let imm = make_canonical(&ShapeSpec::GreatSubsphere { k: 2, n: 4 }).unwrap();
        for u in [[0.3, 1.0], [2.0, 5.5]] {
            let fr = imm.adapted_frame(0, &u).unwrap();
            assert_eq!(fr.normal.len(), 2);
            assert!(max_abs_diff(&fr.normal[0], &[0.0, 0.0, 0.0, 1.0, 0.0]) < 1e-15);
            assert!(max_abs_diff(&fr.normal[1], &[0.0, 0.0, 0.0, 0.0, 1.0]) < 1e-15);
            for t in &fr.tangent {
                assert!(t[3] == 0.0 && t[4] == 0.0);
                assert!(dot(t, fr.point.coords()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn codimension_one_has_a_single_normal() {
        let imm = make_canonical(&ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 }).unwrap();
        let fr = imm.adapted_frame(0, &[0.4, 0.9]).unwrap();
        assert_eq!(fr.normal.len(), 1);
        assert_eq!(fr.tangent.len(), 2);
    }

    #[test]
    fn frames_are_bitwise_reproducible() {
        let imm = make_canonical(&ShapeSpec::GeodesicSphere {
            k: 2,
            n: 4,
            theta: 1.0,
        })
        .unwrap();
        let a = imm.adapted_frame(0, &[0.77, 3.1]).unwrap();
        let b = imm.adapted_frame(0, &[0.77, 3.1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geodesic_sphere_mean_curvature() {
        let theta = core::f64::consts::PI / 3.0;
        let imm = make_canonical(&ShapeSpec::GeodesicSphere { k: 2, n: 4, theta }).unwrap();
        let g = imm.local_geometry(0, &[1.1, 0.4]).unwrap();
        let expect = 2.0 * libm::cos(theta) / libm::sin(theta);
        assert!((norm(&g.shape.mean_curvature) - expect).abs() < 1e-12);
        assert!((expect - 1.154700538).abs() < 1e-9);
    }

    #[test]
    fn minimal_library_shapes_have_vanishing_mean_curvature() {
        for spec in [
            ShapeSpec::GreatSubsphere { k: 2, n: 4 },
            ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 },
            ShapeSpec::CliffordTorus { p: 1, q: 2, n: 4 },
        ] {
            let imm = make_canonical_with(&spec, 6).unwrap();
            for i in 0..imm.nodes().len() {
                let g = imm.node_geometry(i).unwrap();
                assert!(norm(&g.shape.mean_curvature) < 1e-12, "{spec:?}");
            }
        }
    }

    #[test]
    fn conformal_mean_curvature_examples() {
        let imm = make_canonical(&ShapeSpec::GreatSubsphere { k: 2, n: 5 }).unwrap();
        let g = imm.local_geometry(0, &[0.5, 0.5]).unwrap();
        let zero = ConstantFactor::new(0.0);
        let h = conformal_mean_curvature(&g.shape, &zero, &g.frame).unwrap();
        assert_eq!(h.vec(), &g.shape.mean_curvature[..]);
        let ax = AxialFactor::new(0.05, 3);
        let h = conformal_mean_curvature(&g.shape, &ax, &g.frame).unwrap();
        assert!(h.norm() < 1e-12);
        let c = ConstantFactor::new(0.8);
        assert!(conformal_mean_curvature(&g.shape, &c, &g.frame).unwrap().norm() < 1e-12);
    }

    #[test]
    fn missing_second_derivatives_are_reported() {
        let base = make_canonical(&ShapeSpec::GreatSubsphere { k: 2, n: 3 }).unwrap();
        let map = base.charts()[0].map.clone();
        let fd = FiniteDifferenceChart::new(2, 4, move |u| map.point(u)).first_order_only();
        let chart = Chart::new(base.charts()[0].domain.clone(), alloc::sync::Arc::new(fd));
        let imm = Immersion::new("fd", 2, 3, vec![chart], 4).unwrap();
        let frame = imm.adapted_frame(0, &[0.5, 0.5]).unwrap();
        assert!(matches!(
            imm.second_fundamental_form(0, &[0.5, 0.5], &frame),
            Err(Error::UnsupportedChart(_))
        ));
    }

    #[test]
    fn rank_deficient_charts_are_degenerate() {
        // collapses the second chart variable
        let fd = FiniteDifferenceChart::new(2, 4, |u: &[f64]| {
            vec![libm::cos(u[0]), libm::sin(u[0]), 0.0, 0.0]
        });
        let chart = Chart::new(
            vec![Axis::periodic(0.0, 6.0), Axis::open(0.0, 1.0)],
            alloc::sync::Arc::new(fd),
        );
        let imm = Immersion::new("flat", 2, 3, vec![chart], 3).unwrap();
        assert!(matches!(
            imm.adapted_frame(0, &[0.1, 0.5]),
            Err(Error::DegenerateImmersion(_))
        ));
    }

    #[test]
    fn dimension_bounds_are_enforced() {
        assert!(matches!(
            Immersion::new("bad", 3, 3, Vec::new(), 4),
            Err(Error::Dimension(_))
        ));
    }
}
