//! Extrinsic geometry of the round unit sphere `S^n ⊂ ℝ^{n+1}` and the
//! transformation laws for a conformal metric `g̃ = e^{2f} g`.
//!
//! Tangent vectors are vectors of `ℝ^{n+1}` orthogonal to their base point.
//! The round Levi-Civita connection is the tangential projection of the flat
//! derivative, and the curvature operator follows the convention
//! `R(X,Y)Z = ∇_Y∇_X Z − ∇_X∇_Y Z + ∇_{[X,Y]}Z`, which on the unit sphere reads
//! `R(X,Y)Z = ⟨X,Z⟩Y − ⟨Y,Z⟩X` and gives `g(R(V,E)V,E) = 1` for orthonormal
//! `V, E`.

mod factor;

pub use factor::{
    AxialFactor, ConformalFactor, ConstantFactor, DerivativeKind, FiniteDifferenceFactor,
    HeightFactor, QuadraticFactor, FD_FACTOR_STEP,
};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::immersion::AdaptedFrame;
use crate::linalg::{axpy, dot, exp, max_abs_diff, norm, norm_sq, scaled, Matrix};

/// `|p| = 1` tolerance for points of the sphere.
pub const UNIT_TOL: f64 = 1e-12;
/// `⟨v, p⟩ = 0` tolerance for tangent vectors.
pub const TANGENCY_TOL: f64 = 1e-10;
/// Orthonormality tolerance for two-planes.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Two base points closer than this (max-norm) are considered equal.
const BASE_TOL: f64 = 1e-12;

/// A point of the unit sphere, stored as a unit vector of `ℝ^{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint {
    coords: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::domain("a sphere point needs at least two coordinates"));
        }
        let len = norm(&coords);
        if (len - 1.0).abs() > UNIT_TOL || !len.is_finite() {
            return Err(Error::domain(format!("point has norm {len}, expected 1")));
        }
        Ok(Self { coords })
    }

    /// Radially projects a non-zero vector onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let len = norm(&coords);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::domain("cannot normalize a zero or non-finite vector"));
        }
        for c in &mut coords {
            *c /= len;
        }
        Ok(Self { coords })
    }

    /// The `i`-th standard basis vector of `ℝ^{ambient_dim}`.
    pub fn basis(ambient_dim: usize, i: usize) -> Self {
        Self {
            coords: crate::linalg::unit(ambient_dim, i),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `n + 1`
    pub fn ambient_dim(&self) -> usize {
        self.coords.len()
    }

    /// `n`
    pub fn sphere_dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// `v − ⟨v,p⟩p`
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        axpy(-dot(v, &self.coords), &self.coords, &mut w);
        w
    }

    fn same_as(&self, other: &AmbientPoint) -> bool {
        self.coords.len() == other.coords.len()
            && max_abs_diff(&self.coords, &other.coords) <= BASE_TOL
    }
}

/// A vector tangent to the sphere at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: AmbientPoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: AmbientPoint, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != base.ambient_dim() {
            return Err(Error::domain("tangent vector and base point differ in dimension"));
        }
        let radial = dot(&vec, base.coords());
        if radial.abs() > TANGENCY_TOL * (1.0 + norm(&vec)) {
            return Err(Error::domain(format!("vector is not tangent: ⟨v,p⟩ = {radial:e}")));
        }
        Ok(Self { base, vec })
    }

    pub fn zero(base: AmbientPoint) -> Self {
        let vec = alloc::vec![0.0; base.ambient_dim()];
        Self { base, vec }
    }

    pub(crate) fn new_unchecked(base: AmbientPoint, vec: Vec<f64>) -> Self {
        Self { base, vec }
    }

    pub fn base(&self) -> &AmbientPoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.vec
    }

    /// Round inner product with another vector at the same point.
    pub fn inner(&self, other: &TangentVector) -> Result<f64> {
        common_base(&[self, other])?;
        Ok(dot(&self.vec, &other.vec))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vec)
    }
}

fn common_base<'a>(vs: &[&'a TangentVector]) -> Result<&'a AmbientPoint> {
    let first = vs[0].base();
    if vs.iter().all(|v| v.base().same_as(first)) {
        Ok(first)
    } else {
        Err(Error::domain("tangent vectors are based at different points"))
    }
}

/// A two-plane of `T_pS^n` given by a g-orthonormal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPlane {
    x: TangentVector,
    y: TangentVector,
}

impl TwoPlane {
    pub fn new(x: TangentVector, y: TangentVector) -> Result<Self> {
        common_base(&[&x, &y])?;
        let xx = norm_sq(x.vec());
        let yy = norm_sq(y.vec());
        let xy = dot(x.vec(), y.vec());
        if (xx - 1.0).abs() > ORTHONORMAL_TOL
            || (yy - 1.0).abs() > ORTHONORMAL_TOL
            || xy.abs() > ORTHONORMAL_TOL
        {
            return Err(Error::domain("two-plane vectors are not orthonormal"));
        }
        Ok(Self { x, y })
    }

    pub fn base(&self) -> &AmbientPoint {
        self.x.base()
    }

    pub fn x(&self) -> &TangentVector {
        &self.x
    }

    pub fn y(&self) -> &TangentVector {
        &self.y
    }
}

/// The Hessian of `f|_{S^n}` at a point, as the symmetric matrix
/// `Hess F − ⟨p, ∇F⟩ I` acting on tangent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereHessian {
    base: AmbientPoint,
    matrix: Matrix,
}

impl SphereHessian {
    pub fn base(&self) -> &AmbientPoint {
        &self.base
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `Hess f(X, Y)`
    pub fn eval(&self, x: &TangentVector, y: &TangentVector) -> Result<f64> {
        common_base(&[x, y])?;
        Ok(self.matrix.bilinear(x.vec(), y.vec()))
    }

    /// `∇_X ∇f`
    pub fn covariant(&self, x: &TangentVector) -> TangentVector {
        let w = self.base.project(&self.matrix.mul_vec(x.vec()));
        TangentVector::new_unchecked(self.base.clone(), w)
    }
}

/// `v − ⟨v,p⟩p` as a tangent vector at `p`.
pub fn tangent_project(p: &AmbientPoint, v: &[f64]) -> Result<TangentVector> {
    if v.len() != p.ambient_dim() {
        return Err(Error::domain("vector and point differ in dimension"));
    }
    Ok(TangentVector::new_unchecked(p.clone(), p.project(v)))
}

/// Spherical gradient and Hessian of the conformal factor at `p`.
pub fn sphere_grad_hess(
    f: &dyn ConformalFactor,
    p: &AmbientPoint,
) -> Result<(TangentVector, SphereHessian)> {
    let jet = ConformalJet::new(f, p)?;
    let grad = TangentVector::new_unchecked(p.clone(), jet.grad.clone());
    Ok((
        grad,
        SphereHessian {
            base: p.clone(),
            matrix: jet.hess,
        },
    ))
}

/// `R(X,Y)Z = ⟨X,Z⟩Y − ⟨Y,Z⟩X`
pub fn round_curvature(
    x: &TangentVector,
    y: &TangentVector,
    z: &TangentVector,
) -> Result<TangentVector> {
    let base = common_base(&[x, y, z])?;
    Ok(TangentVector::new_unchecked(
        base.clone(),
        round_curvature_raw(x.vec(), y.vec(), z.vec()),
    ))
}

pub(crate) fn round_curvature_raw(x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = scaled(dot(x, z), y);
    axpy(-dot(y, z), x, &mut out);
    out
}

/// `∇̃_X Y = ∇_X Y + X(f)Y + Y(f)X − g(X,Y)∇f`, given the round derivative
/// `∇_X Y` at the common base point.
pub fn conformal_connection(
    f: &dyn ConformalFactor,
    x: &TangentVector,
    y: &TangentVector,
    nabla_xy: &TangentVector,
) -> Result<TangentVector> {
    let base = common_base(&[x, y, nabla_xy])?;
    let jet = ConformalJet::new(f, base)?;
    Ok(TangentVector::new_unchecked(
        base.clone(),
        jet.connection(x.vec(), y.vec(), nabla_xy.vec()),
    ))
}

/// The curvature operator `R̃(X,Y)Z` of `g̃`, same sign convention as
/// [`round_curvature`].
pub fn conformal_curvature(
    f: &dyn ConformalFactor,
    x: &TangentVector,
    y: &TangentVector,
    z: &TangentVector,
) -> Result<TangentVector> {
    let base = common_base(&[x, y, z])?;
    let jet = ConformalJet::new(f, base)?;
    Ok(TangentVector::new_unchecked(
        base.clone(),
        jet.curvature(x.vec(), y.vec(), z.vec()),
    ))
}

/// Sectional curvature of `g̃` on a g-orthonormal two-plane.
pub fn conformal_sectional(f: &dyn ConformalFactor, plane: &TwoPlane) -> Result<f64> {
    let jet = ConformalJet::new(f, plane.base())?;
    Ok(jet.sectional(plane.x().vec(), plane.y().vec()))
}

/// `e^{dim · f(p)}`: the density of the `dim`-dimensional `g̃` volume against
/// the round one.
pub fn volume_element_factor(f: &dyn ConformalFactor, p: &AmbientPoint, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidArgument("volume dimension must be at least 1".into()));
    }
    Ok(exp(dim as f64 * f.value(p.coords())))
}

/// A frame `Ẽ_α = e^{−f} E_α`, orthonormal for `g̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFrame {
    pub point: AmbientPoint,
    pub tangent: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
    /// `f(p)`
    pub f_value: f64,
}

impl ConformalFrame {
    pub fn vectors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.tangent.iter().chain(self.normal.iter())
    }

    /// Gram matrix of the frame in the metric `g̃`.
    pub fn conformal_gram(&self) -> Matrix {
        let vs: Vec<&Vec<f64>> = self.vectors().collect();
        let scale = exp(2.0 * self.f_value);
        Matrix::from_fn(vs.len(), vs.len(), |a, b| scale * dot(vs[a], vs[b]))
    }
}

pub fn conformal_frame(frame: &AdaptedFrame, f: &dyn ConformalFactor) -> ConformalFrame {
    let f_value = f.value(frame.point.coords());
    let s = exp(-f_value);
    ConformalFrame {
        point: frame.point.clone(),
        tangent: frame.tangent.iter().map(|e| scaled(s, e)).collect(),
        normal: frame.normal.iter().map(|e| scaled(s, e)).collect(),
        f_value,
    }
}

/// Value and first two spherical derivatives of a conformal factor at one
/// point, with the pointwise transformation laws evaluated on raw tangent
/// vectors (slices of length `n + 1`, assumed tangent at `point`).
#[derive(Debug, Clone)]
pub struct ConformalJet {
    pub point: AmbientPoint,
    /// `f(p)`
    pub value: f64,
    /// `∇f(p)`, tangent.
    pub grad: Vec<f64>,
    /// `Hess F − ⟨p,∇F⟩ I`
    pub hess: Matrix,
    pub kind: DerivativeKind,
}

impl ConformalJet {
    pub fn new(f: &dyn ConformalFactor, p: &AmbientPoint) -> Result<Self> {
        let x = p.coords();
        let ambient_grad = f.gradient(x);
        let mut hess = f.hessian(x);
        if ambient_grad.len() != x.len() || hess.rows() != x.len() || hess.cols() != x.len() {
            return Err(Error::Dimension(format!(
                "conformal factor derivatives do not match ambient dimension {}",
                x.len()
            )));
        }
        hess.add_scaled_identity(-dot(x, &ambient_grad));
        Ok(Self {
            point: p.clone(),
            value: f.value(x),
            grad: p.project(&ambient_grad),
            hess,
            kind: f.kind(),
        })
    }

    /// `X(f)`
    #[inline]
    pub fn df(&self, x: &[f64]) -> f64 {
        dot(&self.grad, x)
    }

    /// `Hess f(X, Y)`
    #[inline]
    pub fn hess(&self, x: &[f64], y: &[f64]) -> f64 {
        self.hess.bilinear(x, y)
    }

    /// `∇_X ∇f`
    pub fn covariant_hess(&self, x: &[f64]) -> Vec<f64> {
        self.point.project(&self.hess.mul_vec(x))
    }

    pub fn grad_norm_sq(&self) -> f64 {
        norm_sq(&self.grad)
    }

    /// `g̃(X, Y) = e^{2f} g(X, Y)`
    pub fn metric(&self, x: &[f64], y: &[f64]) -> f64 {
        exp(2.0 * self.value) * dot(x, y)
    }

    pub fn connection(&self, x: &[f64], y: &[f64], nabla_xy: &[f64]) -> Vec<f64> {
        let mut out = nabla_xy.to_vec();
        axpy(self.df(x), y, &mut out);
        axpy(self.df(y), x, &mut out);
        axpy(-dot(x, y), &self.grad, &mut out);
        out
    }

    pub fn curvature(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let (xf, yf, zf) = (self.df(x), self.df(y), self.df(z));
        let (xz, yz) = (dot(x, z), dot(y, z));
        let grad_sq = self.grad_norm_sq();
        let mut out = round_curvature_raw(x, y, z);
        axpy(xf * zf, y, &mut out);
        axpy(-yf * zf, x, &mut out);
        axpy(-xf * yz, &self.grad, &mut out);
        axpy(yf * xz, &self.grad, &mut out);
        axpy(-xz, &self.covariant_hess(y), &mut out);
        axpy(yz, &self.covariant_hess(x), &mut out);
        axpy(-xz * grad_sq, y, &mut out);
        axpy(yz * grad_sq, x, &mut out);
        axpy(-self.hess(x, z), y, &mut out);
        axpy(self.hess(y, z), x, &mut out);
        out
    }

    /// Sectional curvature of `g̃` for g-orthonormal `X, Y`.
    pub fn sectional(&self, x: &[f64], y: &[f64]) -> f64 {
        let (xf, yf) = (self.df(x), self.df(y));
        exp(-2.0 * self.value)
            * (1.0 + xf * xf + yf * yf
                - self.grad_norm_sq()
                - self.hess(x, x)
                - self.hess(y, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sqrt, unit};
    use alloc::vec;

    fn e(n1: usize, i: usize) -> Vec<f64> {
        unit(n1, i)
    }

    fn tv(p: &AmbientPoint, v: Vec<f64>) -> TangentVector {
        TangentVector::new(p.clone(), v).unwrap()
    }

    #[test]
    fn tangent_projection_examples() {
        let p = AmbientPoint::basis(4, 0);
        assert_eq!(tangent_project(&p, &e(4, 1)).unwrap().vec(), &e(4, 1)[..]);
        assert_eq!(tangent_project(&p, &e(4, 0)).unwrap().vec(), &[0.0; 4][..]);
        let v = tangent_project(&p, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.vec(), &[0.0, 1.0, 0.0, 0.0][..]);
        let again = tangent_project(&p, v.vec()).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn non_unit_points_are_rejected() {
        assert!(matches!(AmbientPoint::new(vec![1.0, 1.0]), Err(Error::Domain(_))));
        assert!(AmbientPoint::new(vec![1.0, 1e-13]).is_ok());
        assert!(AmbientPoint::normalize(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn non_tangent_vectors_are_rejected() {
        let p = AmbientPoint::basis(3, 0);
        assert!(TangentVector::new(p, vec![0.1, 1.0, 0.0]).is_err());
    }

    #[test]
    fn sphere_derivatives_of_linear_and_constant_factors() {
        let p = AmbientPoint::basis(4, 0);
        let (g, h) = sphere_grad_hess(&ConstantFactor::new(2.5), &p).unwrap();
        assert!(g.norm() == 0.0);
        assert!(h.matrix().max_asymmetry() == 0.0);
        let x = tv(&p, e(4, 2));
        assert_eq!(h.eval(&x, &x).unwrap(), 0.0);

        // F = <a,x> with a ⊥ p: grad = a, Hess = 0 on tangent vectors.
        let a = vec![0.0, 0.3, -0.4, 0.5];
        let f = HeightFactor::new(1.0, a.clone());
        let (g, h) = sphere_grad_hess(&f, &p).unwrap();
        assert!(max_abs_diff(g.vec(), &a) < 1e-15);
        for i in 1..4 {
            for j in 1..4 {
                let hx = h.eval(&tv(&p, e(4, i)), &tv(&p, e(4, j))).unwrap();
                assert!(hx.abs() < 1e-15);
            }
        }

        // At the pole p = a/|a| the gradient is radial, hence zero.
        let pole = AmbientPoint::normalize(a.clone()).unwrap();
        let (g, _) = sphere_grad_hess(&f, &pole).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn round_curvature_convention() {
        let p = AmbientPoint::basis(4, 0);
        let (x, y) = (tv(&p, e(4, 1)), tv(&p, e(4, 2)));
        assert_eq!(round_curvature(&x, &y, &x).unwrap().vec(), &e(4, 2)[..]);
        assert_eq!(round_curvature(&x, &x, &y).unwrap().vec(), &[0.0; 4][..]);
        let rvev = round_curvature(&x, &y, &x).unwrap().inner(&y).unwrap();
        assert_eq!(rvev, 1.0);

        let q = AmbientPoint::basis(4, 1);
        let z = tv(&q, e(4, 0));
        assert!(round_curvature(&x, &y, &z).is_err());
    }

    #[test]
    fn conformal_connection_substitution() {
        let p = AmbientPoint::basis(4, 0);
        let x = tv(&p, e(4, 1));
        let nabla = tv(&p, vec![0.0, 0.2, 0.0, -0.7]);
        let same = conformal_connection(&ConstantFactor::new(0.0), &x, &x, &nabla).unwrap();
        assert_eq!(same, nabla);
        let same = conformal_connection(&ConstantFactor::new(-1.3), &x, &x, &nabla).unwrap();
        assert_eq!(same, nabla);

        // X = Y unit, ∇f = a tangent: adds 2X(f)X − a.
        let a = vec![0.0, 0.5, 0.25, -1.0];
        let f = HeightFactor::new(1.0, a.clone());
        let got = conformal_connection(&f, &x, &x, &nabla).unwrap();
        let mut want = nabla.vec().to_vec();
        axpy(2.0 * 0.5, x.vec(), &mut want);
        axpy(-1.0, &a, &mut want);
        assert!(max_abs_diff(got.vec(), &want) < 1e-15);
    }

    #[test]
    fn conformal_curvature_reduces_for_constant_factors() {
        let p = AmbientPoint::normalize(vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let x = tangent_project(&p, &[1.0, 0.0, 0.2, 0.0]).unwrap();
        let y = tangent_project(&p, &[0.0, 1.0, 0.0, -0.5]).unwrap();
        let z = tangent_project(&p, &[0.4, 0.4, 0.1, 1.0]).unwrap();
        let round = round_curvature(&x, &y, &z).unwrap();
        for c in [0.0, 0.7, -2.0] {
            let r = conformal_curvature(&ConstantFactor::new(c), &x, &y, &z).unwrap();
            assert!(max_abs_diff(r.vec(), round.vec()) < 1e-15);
        }
        let f = AxialFactor::new(0.3, 2);
        let r = conformal_curvature(&f, &x, &x, &z).unwrap();
        assert!(r.norm() < 1e-15);
    }

    #[test]
    fn conformal_sectional_constant_and_zero_factor() {
        let p = AmbientPoint::basis(4, 3);
        let plane = TwoPlane::new(tv(&p, e(4, 0)), tv(&p, e(4, 1))).unwrap();
        assert_eq!(conformal_sectional(&ConstantFactor::new(0.0), &plane).unwrap(), 1.0);
        let k = conformal_sectional(&ConstantFactor::new(0.4), &plane).unwrap();
        assert!((k - exp(-0.8)).abs() < 1e-15);
    }

    #[test]
    fn two_plane_requires_orthonormal_pair() {
        let p = AmbientPoint::basis(3, 0);
        let s = 1.0 / sqrt(2.0);
        assert!(TwoPlane::new(tv(&p, vec![0.0, 1.0, 0.0]), tv(&p, vec![0.0, s, s])).is_err());
        assert!(TwoPlane::new(tv(&p, vec![0.0, 2.0, 0.0]), tv(&p, vec![0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn volume_element_examples() {
        let p = AmbientPoint::basis(5, 0);
        let zero = ConstantFactor::new(0.0);
        assert_eq!(volume_element_factor(&zero, &p, 4).unwrap(), 1.0);
        let c = ConstantFactor::new(0.3);
        assert!((volume_element_factor(&c, &p, 4).unwrap() - exp(1.2)).abs() < 1e-14);
        assert!((volume_element_factor(&c, &p, 2).unwrap() - exp(0.6)).abs() < 1e-14);
        assert!(volume_element_factor(&c, &p, 0).is_err());
    }
}
