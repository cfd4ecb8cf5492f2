//! Second-variation quadratic forms of `k`-volume for the round metric `g`
//! and the conformal metric `g̃ = e^{2f} g`, and their traces over the
//! families of (rescaled) projected constant vector fields.
//!
//! Pointwise, for a normal field `V`,
//! `q(V,V) = |∇^⊥V|² − Σ_i g(R(V,E_i)V,E_i) − Σ_{ij} g(A(E_i,E_j),V)²`,
//! and `q̃` is the same expression built from `g̃`, `∇̃`, `R̃` and `Ã` in a
//! `g̃`-orthonormal frame.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::ambient::{round_curvature_raw, ConformalFactor, ConformalJet, DerivativeKind};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::immersion::{
    conformal_mean_curvature_raw, AdaptedFrame, Immersion, LocalGeometry, Measure, ShapeData,
};
use crate::linalg::{axpy, dot, exp, norm, norm_sq, pairwise_sum, scaled, sub, Matrix};

/// Default threshold on `sup |H̃|` below which `Σ` counts as `g̃`-minimal.
pub const MINIMALITY_TOL: f64 = 1e-6;
/// Step for finite-difference derivatives of custom fields.
pub const FD_FIELD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    ConstantProjection,
    RescaledConstant,
    Custom,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::ConstantProjection => "constant-field-projection",
            FieldKind::RescaledConstant => "rescaled-constant",
            FieldKind::Custom => "custom",
        }
    }
}

/// A normal field and its normal covariant derivatives at one point:
/// `value = V`, `nabla_perp[i] = ∇^⊥_{E_i} V` in the frame of the point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: Vec<f64>,
    pub nabla_perp: Vec<Vec<f64>>,
}

impl FieldJet {
    /// `Σ_i |∇^⊥_{E_i} V|²`
    pub fn grad_norm_sq(&self) -> f64 {
        self.nabla_perp.iter().map(|d| norm_sq(d)).sum()
    }
}

/// A section of the normal bundle of `Σ`.
pub trait NormalField: Send + Sync {
    fn jet(&self, geom: &LocalGeometry) -> Result<FieldJet>;
    fn kind(&self) -> FieldKind;
}

/// `V(x) = v − ⟨v,x⟩x`, the sphere gradient of `x ↦ ⟨v,x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    pub v: Vec<f64>,
}

impl ConstantField {
    pub fn new(v: Vec<f64>) -> Self {
        Self { v }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.v.clone();
        axpy(-dot(&self.v, x), x, &mut out);
        out
    }

    /// Round covariant derivative `∇_X V = −⟨v,x⟩ X`.
    pub fn derivative(&self, x: &[f64], dir: &[f64]) -> Vec<f64> {
        scaled(-dot(&self.v, x), dir)
    }

    /// The normal part `V^⊥` as a field on `Σ`.
    pub fn normal_projection(&self) -> ProjectedConstantField {
        ProjectedConstantField { v: self.v.clone() }
    }
}

/// `V^⊥` for a constant field, with `∇^⊥_{E_i} V^⊥ = −A(E_i, V^⊤)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedConstantField {
    pub v: Vec<f64>,
}

impl ProjectedConstantField {
    pub fn new(v: Vec<f64>) -> Self {
        Self { v }
    }
}

impl NormalField for ProjectedConstantField {
    fn jet(&self, geom: &LocalGeometry) -> Result<FieldJet> {
        if self.v.len() != geom.point.ambient_dim() {
            return Err(Error::Dimension(format!(
                "constant vector has length {}, ambient dimension is {}",
                self.v.len(),
                geom.point.ambient_dim()
            )));
        }
        Ok(constant_field_jet(&self.v, &geom.frame, &geom.shape))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::ConstantProjection
    }
}

/// Jet of `(v − ⟨v,x⟩x)^⊥` at a frame.
pub fn constant_field_jet(v: &[f64], frame: &AdaptedFrame, shape: &ShapeData) -> FieldJet {
    let tangent = frame.tangent_part(v);
    let nabla_perp = (0..frame.k())
        .map(|i| scaled(-1.0, &shape.apply(i, &tangent, frame)))
        .collect();
    FieldJet {
        value: frame.normal_part(v),
        nabla_perp,
    }
}

/// `Ṽ = e^{−f} V`.
pub struct Rescaled<'a> {
    pub inner: &'a dyn NormalField,
    pub f: &'a dyn ConformalFactor,
}

impl<'a> Rescaled<'a> {
    pub fn new(inner: &'a dyn NormalField, f: &'a dyn ConformalFactor) -> Self {
        Self { inner, f }
    }
}

impl NormalField for Rescaled<'_> {
    fn jet(&self, geom: &LocalGeometry) -> Result<FieldJet> {
        let jet = ConformalJet::new(self.f, &geom.point)?;
        Ok(rescale_jet(&self.inner.jet(geom)?, &jet, &geom.frame))
    }

    fn kind(&self) -> FieldKind {
        match self.inner.kind() {
            FieldKind::ConstantProjection | FieldKind::RescaledConstant => {
                FieldKind::RescaledConstant
            }
            FieldKind::Custom => FieldKind::Custom,
        }
    }
}

/// `∇^⊥_{E_i}(e^{−f}V) = e^{−f}(∇^⊥_{E_i}V − E_i(f) V)`.
pub fn rescale_jet(field: &FieldJet, jet: &ConformalJet, frame: &AdaptedFrame) -> FieldJet {
    let s = exp(-jet.value);
    let nabla_perp = field
        .nabla_perp
        .iter()
        .zip(&frame.tangent)
        .map(|(d, e)| {
            let mut out = scaled(s, d);
            axpy(-s * jet.df(e), &field.value, &mut out);
            out
        })
        .collect();
    FieldJet {
        value: scaled(s, &field.value),
        nabla_perp,
    }
}

type AmbientMap = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type AmbientDerivative = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A user field `W(x)` on the sphere, used through its normal part
/// `V = W^⊥`. `∇^⊥_E V = (D_E W)^⊥ − A(E, W^⊤)`, where `D_E W` is either
/// supplied or taken by central differences along a great circle.
pub struct CustomField {
    eval: AmbientMap,
    derivative: Option<AmbientDerivative>,
    finite_differences: bool,
}

impl CustomField {
    pub fn new(eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            eval: Box::new(eval),
            derivative: None,
            finite_differences: false,
        }
    }

    /// `derivative(x, E)` is the flat derivative `D_E W` at `x`.
    pub fn with_derivative(
        mut self,
        derivative: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Box::new(derivative));
        self
    }

    pub fn with_finite_differences(mut self) -> Self {
        self.finite_differences = true;
        self
    }

    pub fn derivative_kind(&self) -> Option<DerivativeKind> {
        match (&self.derivative, self.finite_differences) {
            (Some(_), _) => Some(DerivativeKind::Analytic),
            (None, true) => Some(DerivativeKind::FiniteDifference),
            (None, false) => None,
        }
    }

    fn flat_derivative(&self, x: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = &self.derivative {
            return Ok(d(x, dir));
        }
        if !self.finite_differences {
            return Err(Error::MissingDerivative(
                "custom field has neither a derivative nor finite differences enabled".into(),
            ));
        }
        let h = FD_FIELD_STEP;
        let along = |t: f64| {
            let mut y = x.to_vec();
            axpy(t, dir, &mut y);
            let len = norm(&y);
            y.iter_mut().for_each(|c| *c /= len);
            (self.eval)(&y)
        };
        let (plus, minus) = (along(h), along(-h));
        Ok(plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect())
    }
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField")
            .field("derivative", &self.derivative_kind())
            .finish_non_exhaustive()
    }
}

impl NormalField for CustomField {
    fn jet(&self, geom: &LocalGeometry) -> Result<FieldJet> {
        let x = geom.point.coords();
        let w = (self.eval)(x);
        if w.len() != x.len() {
            return Err(Error::Dimension("custom field has the wrong length".into()));
        }
        let frame = &geom.frame;
        let w_top = frame.tangent_part(&w);
        let nabla_perp = frame
            .tangent
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let dw = self.flat_derivative(x, e)?;
                Ok(sub(&frame.normal_part(&dw), &geom.shape.apply(i, &w_top, frame)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldJet {
            value: frame.normal_part(&w),
            nabla_perp,
        })
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Custom
    }
}

/// The three summands of a second-variation form; `total` is
/// `grad_term − curv_term − shape_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFormBreakdown {
    pub grad_term: f64,
    pub curv_term: f64,
    pub shape_term: f64,
    pub total: f64,
}

impl QuadFormBreakdown {
    pub fn new(grad_term: f64, curv_term: f64, shape_term: f64) -> Self {
        Self {
            grad_term,
            curv_term,
            shape_term,
            total: grad_term - curv_term - shape_term,
        }
    }

    pub fn max_term_diff(&self, other: &QuadFormBreakdown) -> f64 {
        [
            self.grad_term - other.grad_term,
            self.curv_term - other.curv_term,
            self.shape_term - other.shape_term,
            self.total - other.total,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// How `q̃` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// In a `g̃`-orthonormal frame with the conformal connection and curvature.
    Direct,
    /// From `q` and the transformation identities for the three summands.
    Transformed,
}

/// `q(V,V)` in the round metric.
pub fn q_round(frame: &AdaptedFrame, shape: &ShapeData, field: &FieldJet) -> QuadFormBreakdown {
    let v = &field.value;
    let k = frame.k();
    let curv: f64 = frame
        .tangent
        .iter()
        .map(|e| dot(&round_curvature_raw(v, e, v), e))
        .sum();
    let mut sh = 0.0;
    for i in 0..k {
        for j in 0..k {
            let a = dot(shape.a(i, j), v);
            sh += a * a;
        }
    }
    QuadFormBreakdown::new(field.grad_norm_sq(), curv, sh)
}

/// `q̃(V,V)` evaluated directly in the frame `Ẽ_α = e^{−f} E_α`.
pub fn q_tilde_direct(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    field: &FieldJet,
    jet: &ConformalJet,
) -> QuadFormBreakdown {
    let v = &field.value;
    let k = frame.k();
    let s = exp(-jet.value);
    let et: Vec<Vec<f64>> = frame.tangent.iter().map(|e| scaled(s, e)).collect();

    // |∇̃^⊥V|²: only the normal part of the round derivative survives the projection
    let grad: f64 = et
        .iter()
        .zip(&field.nabla_perp)
        .map(|(e, d)| {
            let w = frame.normal_part(&jet.connection(e, v, &scaled(s, d)));
            jet.metric(&w, &w)
        })
        .sum();

    let curv: f64 = et
        .iter()
        .map(|e| jet.metric(&jet.curvature(v, e, v), e))
        .sum();

    // Ã(Ẽ_i,Ẽ_j) = (∇̃_{Ẽ_i}Ẽ_j)^⊥ with (∇_{Ẽ_i}Ẽ_j)^⊥ = e^{−2f} A(E_i,E_j)
    let mut sh = 0.0;
    for i in 0..k {
        for j in 0..k {
            let round = scaled(s * s, shape.a(i, j));
            let a = frame.normal_part(&jet.connection(&et[i], &et[j], &round));
            let c = jet.metric(&a, v);
            sh += c * c;
        }
    }
    QuadFormBreakdown::new(grad, curv, sh)
}

/// Correction terms of the three transformation identities, valid for any
/// `Σ`: `q̃ − q` summand by summand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCorrections {
    /// `2 Σ_i E_i(f) g(∇^⊥_{E_i}V, V) + |∇^⊤f|²|V|²`
    pub grad: f64,
    /// `k V(f)² − k Hess f(V,V) − k|∇f|²|V|² − div_Σ(∇f)|V|² + |∇^⊤f|²|V|²`
    pub curv: f64,
    /// `k V(f)² − 2 V(f) g(H,V)`
    pub shape: f64,
}

/// Pointwise quantities of `f` along `Σ` entering the identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorAlongSigma {
    /// `|∇^⊤f|²`
    pub grad_top_sq: f64,
    /// `|∇^⊥f|²`
    pub grad_perp_sq: f64,
    /// `|∇f|²`
    pub grad_sq: f64,
    /// `div_Σ(∇f) = Σ_i Hess f(E_i,E_i)`
    pub div_sigma: f64,
}

pub fn factor_along_sigma(frame: &AdaptedFrame, jet: &ConformalJet) -> FactorAlongSigma {
    let grad_top_sq: f64 = frame.tangent.iter().map(|e| { let d = jet.df(e); d * d }).sum();
    let grad_perp_sq: f64 = frame.normal.iter().map(|e| { let d = jet.df(e); d * d }).sum();
    FactorAlongSigma {
        grad_top_sq,
        grad_perp_sq,
        grad_sq: jet.grad_norm_sq(),
        div_sigma: frame.tangent.iter().map(|e| jet.hess(e, e)).sum(),
    }
}

pub fn lemma_corrections(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    field: &FieldJet,
    jet: &ConformalJet,
) -> LemmaCorrections {
    let v = &field.value;
    let k = frame.k() as f64;
    let fs = factor_along_sigma(frame, jet);
    let v_sq = norm_sq(v);
    let vf = jet.df(v);
    let cross: f64 = frame
        .tangent
        .iter()
        .zip(&field.nabla_perp)
        .map(|(e, d)| jet.df(e) * dot(d, v))
        .sum();
    LemmaCorrections {
        grad: 2.0 * cross + fs.grad_top_sq * v_sq,
        curv: k * vf * vf - k * jet.hess(v, v) - k * fs.grad_sq * v_sq - fs.div_sigma * v_sq
            + fs.grad_top_sq * v_sq,
        shape: k * vf * vf - 2.0 * vf * dot(&shape.mean_curvature, v),
    }
}

/// `q̃(V,V)` from `q(V,V)` and the three transformation identities.
pub fn q_tilde_transformed(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    field: &FieldJet,
    jet: &ConformalJet,
) -> QuadFormBreakdown {
    let q = q_round(frame, shape, field);
    let c = lemma_corrections(frame, shape, field, jet);
    QuadFormBreakdown::new(
        q.grad_term + c.grad,
        q.curv_term + c.curv,
        q.shape_term + c.shape,
    )
}

/// `|H̃|_g` at a point.
pub fn h_tilde_norm(frame: &AdaptedFrame, shape: &ShapeData, jet: &ConformalJet) -> f64 {
    norm(&conformal_mean_curvature_raw(shape, jet, frame))
}

fn require_minimal(frame: &AdaptedFrame, shape: &ShapeData, jet: &ConformalJet, tol: f64) -> Result<()> {
    let h = h_tilde_norm(frame, shape, jet);
    if h < tol {
        Ok(())
    } else {
        Err(Error::NotMinimal { h_tilde: h })
    }
}

/// Right-hand side of the transformation of `q̃(V,V)` at a `g̃`-minimal point:
/// `q + (∇^⊤f)(|V|²) + k Hess f(V,V) + k|∇f|²|V|² + div_Σ(∇f)|V|²`.
pub fn q_tilde_minimal_rhs(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    field: &FieldJet,
    jet: &ConformalJet,
    tol: f64,
) -> Result<f64> {
    require_minimal(frame, shape, jet, tol)?;
    let v = &field.value;
    let k = frame.k() as f64;
    let fs = factor_along_sigma(frame, jet);
    let v_sq = norm_sq(v);
    // (∇^⊤f)(|V|²) = 2 Σ_i E_i(f) g(∇^⊥_{E_i}V, V)
    let along: f64 = frame
        .tangent
        .iter()
        .zip(&field.nabla_perp)
        .map(|(e, d)| 2.0 * jet.df(e) * dot(d, v))
        .sum();
    Ok(q_round(frame, shape, field).total
        + along
        + k * jet.hess(v, v)
        + k * fs.grad_sq * v_sq
        + fs.div_sigma * v_sq)
}

/// `q̃(Ṽ,Ṽ)` for `Ṽ = e^{−f}V` at a `g̃`-minimal point, from the unscaled `V`:
/// `e^{−2f}[q(V,V) − |∇^⊤f|²|V|² + k Hess f(V,V) + k|∇f|²|V|² + div_Σ(∇f)|V|²]`.
pub fn q_tilde_rescaled_rhs(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    field: &FieldJet,
    jet: &ConformalJet,
    tol: f64,
) -> Result<f64> {
    require_minimal(frame, shape, jet, tol)?;
    let v = &field.value;
    let k = frame.k() as f64;
    let fs = factor_along_sigma(frame, jet);
    let v_sq = norm_sq(v);
    Ok(exp(-2.0 * jet.value)
        * (q_round(frame, shape, field).total - fs.grad_top_sq * v_sq
            + k * jet.hess(v, v)
            + k * fs.grad_sq * v_sq
            + fs.div_sigma * v_sq))
}

/// `q(V,V)` at a quadrature node.
pub fn q_round_pointwise(
    imm: &Immersion,
    node: usize,
    field: &dyn NormalField,
) -> Result<QuadFormBreakdown> {
    let geom = imm.node_geometry(node)?;
    Ok(q_round(&geom.frame, &geom.shape, &field.jet(&geom)?))
}

/// `q̃(V,V)` at a quadrature node. The transformed route uses the
/// minimal-case shortcut when `|H̃| < MINIMALITY_TOL` and the general
/// identities otherwise.
pub fn q_tilde_pointwise(
    imm: &Immersion,
    node: usize,
    field: &dyn NormalField,
    f: &dyn ConformalFactor,
    route: Route,
) -> Result<QuadFormBreakdown> {
    let geom = imm.node_geometry(node)?;
    let jet = ConformalJet::new(f, &geom.point)?;
    let fj = field.jet(&geom)?;
    Ok(match route {
        Route::Direct => q_tilde_direct(&geom.frame, &geom.shape, &fj, &jet),
        Route::Transformed => {
            let general = q_tilde_transformed(&geom.frame, &geom.shape, &fj, &jet);
            match q_tilde_minimal_rhs(&geom.frame, &geom.shape, &fj, &jet, MINIMALITY_TOL) {
                Ok(total) => QuadFormBreakdown { total, ..general },
                Err(_) => general,
            }
        }
    })
}

/// Columns of `basis` (default: the standard basis of `ℝ^{n+1}`).
fn basis_vectors(dim: usize, basis: Option<&Matrix>) -> Result<Vec<Vec<f64>>> {
    match basis {
        None => Ok((0..dim).map(|i| crate::linalg::unit(dim, i)).collect()),
        Some(m) if m.rows() == dim && m.cols() == dim => Ok(m.columns()),
        Some(m) => Err(Error::Dimension(format!(
            "basis is {}×{}, expected {dim}×{dim}",
            m.rows(),
            m.cols()
        ))),
    }
}

/// `Σ_α q(V_α^⊥, V_α^⊥)` over constant fields from an orthonormal basis.
pub fn trace_q(frame: &AdaptedFrame, shape: &ShapeData, basis: &[Vec<f64>]) -> f64 {
    let terms: Vec<f64> = basis
        .iter()
        .map(|v| q_round(frame, shape, &constant_field_jet(v, frame, shape)).total)
        .collect();
    pairwise_sum(&terms)
}

/// `Σ_α q̃(Ṽ_α, Ṽ_α)` with `Ṽ_α = e^{−f} V_α^⊥`, evaluated directly.
pub fn trace_q_tilde(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    jet: &ConformalJet,
    basis: &[Vec<f64>],
) -> f64 {
    let terms: Vec<f64> = basis
        .iter()
        .map(|v| {
            let fj = rescale_jet(&constant_field_jet(v, frame, shape), jet, frame);
            q_tilde_direct(frame, shape, &fj, jet).total
        })
        .collect();
    pairwise_sum(&terms)
}

/// `K̃(Σ, NΣ) = Σ_i Σ_r K̃(E_i, E_r)`.
pub fn k_sigma_normal_at(frame: &AdaptedFrame, jet: &ConformalJet) -> f64 {
    let terms: Vec<f64> = frame
        .tangent
        .iter()
        .flat_map(|e| frame.normal.iter().map(move |r| jet.sectional(e, r)))
        .collect();
    pairwise_sum(&terms)
}

/// `tr_𝒱 q` at a node.
pub fn trace_q_over_v(imm: &Immersion, node: usize, basis: Option<&Matrix>) -> Result<f64> {
    let geom = imm.node_geometry(node)?;
    let b = basis_vectors(geom.point.ambient_dim(), basis)?;
    Ok(trace_q(&geom.frame, &geom.shape, &b))
}

/// The conformal trace and its two closed forms at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalTrace {
    /// `Σ_α q̃(Ṽ_α, Ṽ_α)`
    pub trace: f64,
    /// `−K̃(Σ,NΣ) + k|∇^⊥f|² e^{−2f}`; `None` unless `Σ` is `g̃`-minimal here.
    pub rhs_curvature_form: Option<f64>,
    /// `−K̃(Σ,NΣ) + (1/k)|H|² e^{−2f}`; `None` unless `Σ` is `g̃`-minimal here.
    pub rhs_h_form: Option<f64>,
    pub h_tilde_norm: f64,
    /// Set when `|H̃| ≥ MINIMALITY_TOL`.
    pub not_minimal: bool,
}

impl ConformalTrace {
    /// Largest pairwise disagreement of the three values, if available.
    pub fn max_discrepancy(&self) -> Option<f64> {
        let (a, b) = (self.rhs_curvature_form?, self.rhs_h_form?);
        Some(
            (self.trace - a)
                .abs()
                .max((self.trace - b).abs())
                .max((a - b).abs()),
        )
    }
}

pub fn conformal_trace_at(
    frame: &AdaptedFrame,
    shape: &ShapeData,
    jet: &ConformalJet,
    basis: &[Vec<f64>],
    tol: f64,
) -> ConformalTrace {
    let trace = trace_q_tilde(frame, shape, jet, basis);
    let h_tilde = h_tilde_norm(frame, shape, jet);
    let minimal = h_tilde < tol;
    let (curv_form, h_form) = if minimal {
        let k = frame.k() as f64;
        let ks = k_sigma_normal_at(frame, jet);
        let e2 = exp(-2.0 * jet.value);
        let fs = factor_along_sigma(frame, jet);
        (
            Some(-ks + k * fs.grad_perp_sq * e2),
            Some(-ks + norm_sq(&shape.mean_curvature) * e2 / k),
        )
    } else {
        (None, None)
    };
    ConformalTrace {
        trace,
        rhs_curvature_form: curv_form,
        rhs_h_form: h_form,
        h_tilde_norm: h_tilde,
        not_minimal: !minimal,
    }
}

/// `tr_𝒱̃ q̃` at a node together with both closed forms.
pub fn trace_qtilde_over_vtilde(
    imm: &Immersion,
    node: usize,
    f: &dyn ConformalFactor,
    basis: Option<&Matrix>,
) -> Result<ConformalTrace> {
    let geom = imm.node_geometry(node)?;
    let jet = ConformalJet::new(f, &geom.point)?;
    let b = basis_vectors(geom.point.ambient_dim(), basis)?;
    Ok(conformal_trace_at(&geom.frame, &geom.shape, &jet, &b, MINIMALITY_TOL))
}

pub fn k_sigma_normal(imm: &Immersion, node: usize, f: &dyn ConformalFactor) -> Result<f64> {
    let geom = imm.node_geometry(node)?;
    let jet = ConformalJet::new(f, &geom.point)?;
    Ok(k_sigma_normal_at(&geom.frame, &jet))
}

/// What [`q_integral`] integrates.
#[derive(Clone, Copy)]
pub enum Integrand<'a> {
    /// `q(V,V)` or `q̃(V,V)` for one field.
    Field(&'a dyn NormalField),
    /// `tr_𝒱 q` or `tr_𝒱̃ q̃` (rescaled constant fields).
    Trace,
}

/// `Q(V,V) = ∫ q dg` when `f` is `None`, `Q̃(V,V) = ∫ q̃ dg̃` otherwise.
pub fn q_integral<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: Option<&dyn ConformalFactor>,
    integrand: Integrand<'_>,
) -> Result<f64> {
    let dim = imm.n() + 1;
    let basis = basis_vectors(dim, None)?;
    match f {
        None => imm.integrate(exec, Measure::Round, |geom| match integrand {
            Integrand::Field(field) => Ok(q_round(&geom.frame, &geom.shape, &field.jet(geom)?).total),
            Integrand::Trace => Ok(trace_q(&geom.frame, &geom.shape, &basis)),
        }),
        Some(f) => imm.integrate(exec, Measure::Conformal(f), |geom| {
            let jet = ConformalJet::new(f, &geom.point)?;
            match integrand {
                Integrand::Field(field) => {
                    Ok(q_tilde_direct(&geom.frame, &geom.shape, &field.jet(geom)?, &jet).total)
                }
                Integrand::Trace => Ok(trace_q_tilde(&geom.frame, &geom.shape, &jet, &basis)),
            }
        }),
    }
}

/// Node-level trace diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTrace {
    pub node: usize,
    pub tr_v_q: f64,
    pub conformal: ConformalTrace,
    pub k_sigma_normal: f64,
    pub h_norm_sq: f64,
    pub f_value: f64,
    pub grad_perp_sq: f64,
    /// `√det(JᵀJ)` times the quadrature weight.
    pub round_weight: f64,
}

/// Both trace theorems evaluated over all nodes of an immersion.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub k: usize,
    pub n: usize,
    pub nodes: Vec<NodeTrace>,
    /// `∫ tr_𝒱 q dg`
    pub tr_v_q_integral: f64,
    /// `∫ tr_𝒱̃ q̃ dg̃`
    pub tr_vtilde_qtilde_integral: f64,
    pub vol_g: f64,
    pub vol_gtilde: f64,
    /// `sup |H̃|` over the nodes.
    pub sup_h_tilde: f64,
    pub derivative_kind: DerivativeKind,
}

impl TraceReport {
    /// `−k(n−k)`
    pub fn round_trace_expected(&self) -> f64 {
        -((self.k * (self.n - self.k)) as f64)
    }

    /// `max_node |tr_𝒱 q + k(n−k)|`
    pub fn max_round_residual(&self) -> f64 {
        let e = self.round_trace_expected();
        self.nodes
            .iter()
            .fold(0.0, |m, t| m.max((t.tr_v_q - e).abs()))
    }

    /// Largest pairwise disagreement among the three conformal trace values,
    /// or `None` if some node is not `g̃`-minimal.
    pub fn max_conformal_discrepancy(&self) -> Option<f64> {
        self.nodes.iter().try_fold(0.0f64, |m, t| {
            Some(m.max(t.conformal.max_discrepancy()?))
        })
    }

    pub fn is_minimal(&self) -> bool {
        self.nodes.iter().all(|t| !t.conformal.not_minimal)
    }
}

pub fn trace_report<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: &dyn ConformalFactor,
    basis: Option<&Matrix>,
) -> Result<TraceReport> {
    let k = imm.k() as f64;
    let b = basis_vectors(imm.n() + 1, basis)?;
    let nodes = exec
        .map_indexed(imm.nodes().len(), |i| {
            let geom = imm.node_geometry(i)?;
            let jet = ConformalJet::new(f, &geom.point)?;
            let fs = factor_along_sigma(&geom.frame, &jet);
            Ok(NodeTrace {
                node: i,
                tr_v_q: trace_q(&geom.frame, &geom.shape, &b),
                conformal: conformal_trace_at(&geom.frame, &geom.shape, &jet, &b, MINIMALITY_TOL),
                k_sigma_normal: k_sigma_normal_at(&geom.frame, &jet),
                h_norm_sq: norm_sq(&geom.shape.mean_curvature),
                f_value: jet.value,
                grad_perp_sq: fs.grad_perp_sq,
                round_weight: imm.nodes()[i].weight * geom.density,
            })
        })
        .into_iter()
        .collect::<Result<Vec<NodeTrace>>>()?;
    let sum = |g: &dyn Fn(&NodeTrace) -> f64| {
        let terms: Vec<f64> = nodes.iter().map(g).collect();
        pairwise_sum(&terms)
    };
    let conf = |t: &NodeTrace| exp(k * t.f_value);
    Ok(TraceReport {
        k: imm.k(),
        n: imm.n(),
        tr_v_q_integral: sum(&|t| t.round_weight * t.tr_v_q),
        tr_vtilde_qtilde_integral: sum(&|t| t.round_weight * conf(t) * t.conformal.trace),
        vol_g: sum(&|t| t.round_weight),
        vol_gtilde: sum(&|t| t.round_weight * conf(t)),
        sup_h_tilde: nodes
            .iter()
            .fold(0.0, |m, t| m.max(t.conformal.h_tilde_norm)),
        derivative_kind: if imm.derivative_kind() == DerivativeKind::Analytic
            && f.kind() == DerivativeKind::Analytic
        {
            DerivativeKind::Analytic
        } else {
            DerivativeKind::FiniteDifference
        },
        nodes,
    })
}

/// `sup_node |H̃|`.
pub fn sup_h_tilde<E: Executor>(exec: &E, imm: &Immersion, f: &dyn ConformalFactor) -> Result<f64> {
    let hs = imm.node_values(exec, |geom| {
        let jet = ConformalJet::new(f, &geom.point)?;
        Ok(h_tilde_norm(&geom.frame, &geom.shape, &jet))
    })?;
    Ok(hs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{AxialFactor, ConstantFactor, HeightFactor};
    use crate::immersion::{make_canonical, make_canonical_with, ShapeSpec};
    use crate::Sequential;
    use alloc::vec;
    use core::f64::consts::PI;

    fn great(k: usize, n: usize) -> Immersion {
        make_canonical_with(&ShapeSpec::GreatSubsphere { k, n }, 8).unwrap()
    }

    #[test]
    fn constant_field_examples() {
        let c = ConstantField::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(c.value(&[1.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(c.value(&[0.0, 1.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let x = [0.5, libm::sqrt(0.75), 0.0];
        let d = c.derivative(&x, &[0.0, 0.0, 1.0]);
        assert_eq!(d, vec![0.0, 0.0, -0.5]);
    }

    #[test]
    fn great_sphere_normal_field_gives_minus_k() {
        let imm = great(2, 4);
        let field = ProjectedConstantField::new(vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        for node in [0, 17, 40] {
            let q = q_round_pointwise(&imm, node, &field).unwrap();
            assert!(q.grad_term.abs() < 1e-14 && q.shape_term.abs() < 1e-14);
            assert!((q.total + 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn vanishing_field_gives_zero() {
        let imm = great(2, 3);
        let geom = imm.node_geometry(5).unwrap();
        let field = ProjectedConstantField::new(geom.point.coords().to_vec());
        let q = q_round(&geom.frame, &geom.shape, &field.jet(&geom).unwrap());
        assert!(q.total.abs() < 1e-14 && q.curv_term.abs() < 1e-14);
    }

    #[test]
    fn round_trace_on_a_nonminimal_sphere() {
        let imm = make_canonical_with(
            &ShapeSpec::GeodesicSphere { k: 2, n: 4, theta: PI / 3.0 },
            8,
        )
        .unwrap();
        for node in 0..imm.nodes().len() {
            assert!((trace_q_over_v(&imm, node, None).unwrap() + 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_factor_scales_conformal_trace() {
        let imm = great(2, 4);
        let c = ConstantFactor::new(0.3);
        let t = trace_qtilde_over_vtilde(&imm, 3, &c, None).unwrap();
        let expect = -4.0 * libm::exp(-0.6);
        assert!((t.trace - expect).abs() < 1e-12);
        assert!(t.max_discrepancy().unwrap() < 1e-12);
        assert!((k_sigma_normal(&imm, 3, &c).unwrap() - 4.0 * libm::exp(-0.6)).abs() < 1e-12);
    }

    #[test]
    fn routes_agree_for_axial_factor() {
        let imm = great(2, 5);
        let f = AxialFactor::new(0.05, 3);
        let field = ProjectedConstantField::new(vec![0.3, -0.2, 0.1, 0.7, 0.5, -0.4]);
        let rescaled = Rescaled::new(&field, &f);
        for node in [0, 9, 33] {
            let a = q_tilde_pointwise(&imm, node, &rescaled, &f, Route::Direct).unwrap();
            let b = q_tilde_pointwise(&imm, node, &rescaled, &f, Route::Transformed).unwrap();
            assert!(a.max_term_diff(&b) < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn not_minimal_is_reported() {
        let imm = great(2, 4);
        let geom = imm.node_geometry(2).unwrap();
        let f = HeightFactor::new(0.5, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        let jet = ConformalJet::new(&f, &geom.point).unwrap();
        let fj = constant_field_jet(&[0.0, 0.0, 0.0, 1.0, 0.0], &geom.frame, &geom.shape);
        assert!(matches!(
            q_tilde_minimal_rhs(&geom.frame, &geom.shape, &fj, &jet, MINIMALITY_TOL),
            Err(Error::NotMinimal { .. })
        ));
        let t = trace_qtilde_over_vtilde(&imm, 2, &f, None).unwrap();
        assert!(t.not_minimal && t.rhs_h_form.is_none());
    }

    #[test]
    fn integrated_round_trace_on_great_sphere() {
        let imm = make_canonical(&ShapeSpec::GreatSubsphere { k: 2, n: 4 }).unwrap();
        let q = q_integral(&Sequential, &imm, None, Integrand::Trace).unwrap();
        assert!((q + 16.0 * PI).abs() < 1e-9);
        let zero = ConstantFactor::new(0.0);
        let qt = q_integral(&Sequential, &imm, Some(&zero), Integrand::Trace).unwrap();
        assert!((q - qt).abs() < 1e-9);
    }

    #[test]
    fn custom_field_derivatives() {
        let imm = make_canonical_with(&ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 }, 6).unwrap();
        let v = vec![0.2, -0.5, 0.4, 0.7];
        let exact = ProjectedConstantField::new(v.clone());
        let cf = ConstantField::new(v.clone());
        let cf2 = cf.clone();
        let provided = CustomField::new(move |x| cf.value(x)).with_derivative(move |x, e| {
            // flat derivative of v − ⟨v,x⟩x along e
            let mut d = scaled(-dot(&cf2.v, e), x);
            axpy(-dot(&cf2.v, x), e, &mut d);
            d
        });
        let cf3 = ConstantField::new(v.clone());
        let fd = CustomField::new(move |x| cf3.value(x)).with_finite_differences();
        let bare = CustomField::new(|x: &[f64]| x.to_vec());
        let geom = imm.node_geometry(7).unwrap();
        let a = exact.jet(&geom).unwrap();
        let b = provided.jet(&geom).unwrap();
        let c = fd.jet(&geom).unwrap();
        for i in 0..2 {
            assert!(crate::linalg::max_abs_diff(&a.nabla_perp[i], &b.nabla_perp[i]) < 1e-14);
            assert!(crate::linalg::max_abs_diff(&a.nabla_perp[i], &c.nabla_perp[i]) < 1e-8);
        }
        assert!(matches!(bare.jet(&geom), Err(Error::MissingDerivative(_))));
    }
}
