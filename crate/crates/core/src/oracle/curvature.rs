use alloc::vec::Vec;

use crate::ambient::{AmbientPoint, ConformalFactor, ConformalJet, TangentVector};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, remove_components, scaled, unit};

pub const DEFAULT_CURVATURE_STEP: f64 = 1e-3;
pub const MIN_CURVATURE_STEP: f64 = 1e-5;
pub const MAX_CURVATURE_STEP: f64 = 1e-1;

/// Gnomonic chart `s ↦ (p + Σ s_a e_a) / |p + Σ s_a e_a|` around `p`.
struct Gnomonic {
    p: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl Gnomonic {
    fn new(p: &AmbientPoint) -> Self {
        let dim = p.ambient_dim();
        let mut span = alloc::vec![p.coords().to_vec()];
        let mut basis = Vec::with_capacity(dim - 1);
        for i in 0..dim {
            let mut r = unit(dim, i);
            remove_components(&mut r, &span);
            remove_components(&mut r, &span);
            let len = norm(&r);
            if len > 1e-8 && basis.len() + 1 < dim {
                r.iter_mut().for_each(|c| *c /= len);
                span.push(r.clone());
                basis.push(r);
            }
        }
        Self {
            p: p.coords().to_vec(),
            basis,
        }
    }

    fn coords_of(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|e| dot(e, v)).collect()
    }

    fn q(&self, s: &[f64]) -> Vec<f64> {
        let mut q = self.p.clone();
        for (sa, e) in s.iter().zip(&self.basis) {
            axpy(*sa, e, &mut q);
        }
        q
    }

    fn point(&self, s: &[f64]) -> Result<AmbientPoint> {
        AmbientPoint::normalize(self.q(s))
    }

    /// `∂_a x = e_a/r − q⟨q,e_a⟩/r³`
    fn first(&self, s: &[f64], a: usize) -> Vec<f64> {
        let q = self.q(s);
        let r = norm(&q);
        let e = &self.basis[a];
        let mut out = scaled(1.0 / r, e);
        axpy(-dot(&q, e) / (r * r * r), &q, &mut out);
        out
    }

    /// `∂_c∂_a x`
    fn second(&self, s: &[f64], a: usize, c: usize) -> Vec<f64> {
        let q = self.q(s);
        let r = norm(&q);
        let (ea, ec) = (&self.basis[a], &self.basis[c]);
        let (qa, qc) = (dot(&q, ea), dot(&q, ec));
        let r3 = r * r * r;
        let mut out = scaled(-qc / r3, ea);
        axpy(-qa / r3, ec, &mut out);
        axpy(-dot(ea, ec) / r3 + 3.0 * qa * qc / (r3 * r * r), &q, &mut out);
        out
    }

    /// `Σ_c z^c ∂_c x`
    fn field(&self, s: &[f64], z: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.p.len()];
        for (c, zc) in z.iter().enumerate() {
            if *zc != 0.0 {
                axpy(*zc, &self.first(s, c), &mut out);
            }
        }
        out
    }

    /// `∇̃_{∂_a} Z` for `Z = Σ_c z^c ∂_c`.
    fn covariant(&self, f: &dyn ConformalFactor, s: &[f64], a: usize, z: &[f64]) -> Result<Vec<f64>> {
        let point = self.point(s)?;
        let jet = ConformalJet::new(f, &point)?;
        let mut flat = alloc::vec![0.0; self.p.len()];
        for (c, zc) in z.iter().enumerate() {
            if *zc != 0.0 {
                axpy(*zc, &self.second(s, a, c), &mut flat);
            }
        }
        Ok(jet.connection(&self.first(s, a), &self.field(s, z), &point.project(&flat)))
    }
}

/// `R̃(X,Y)Z` from the conformal connection alone: `∇̃_{∂_b}∇̃_{∂_a}Z` is the
/// five-point central difference (step `h`) of `∇̃_{∂_a}Z` along `s_b` in a gnomonic
/// chart, then `R̃(X,Y)Z = Σ X^a Y^b (∇̃_b∇̃_a Z − ∇̃_a∇̃_b Z)`.
pub fn fd_curvature_check(
    f: &dyn ConformalFactor,
    x: &TangentVector,
    y: &TangentVector,
    z: &TangentVector,
    h: f64,
) -> Result<TangentVector> {
    if !(MIN_CURVATURE_STEP..=MAX_CURVATURE_STEP).contains(&h) {
        return Err(Error::StepSize(h));
    }
    let p = x.base();
    if y.base() != p || z.base() != p {
        return Err(Error::domain("tangent vectors are based at different points"));
    }
    let chart = Gnomonic::new(p);
    let (xc, yc, zc) = (chart.coords_of(x.vec()), chart.coords_of(y.vec()), chart.coords_of(z.vec()));
    let dim = chart.basis.len();
    let origin = alloc::vec![0.0; dim];
    let jet0 = ConformalJet::new(f, p)?;

    // ∇̃_{∂_b} W at the origin for W = ∇̃_{∂_a} Z, fourth-order central stencil
    let second_cov = |a: usize, b: usize| -> Result<Vec<f64>> {
        let at = |t: f64| {
            let mut s = origin.clone();
            s[b] = t;
            chart.covariant(f, &s, a, &zc)
        };
        let mut flat = scaled(8.0, &at(h)?);
        axpy(-8.0, &at(-h)?, &mut flat);
        axpy(-1.0, &at(2.0 * h)?, &mut flat);
        axpy(1.0, &at(-2.0 * h)?, &mut flat);
        let flat = scaled(1.0 / (12.0 * h), &flat);
        let w0 = chart.covariant(f, &origin, a, &zc)?;
        Ok(jet0.connection(&chart.basis[b], &w0, &p.project(&flat)))
    };

    let mut out = alloc::vec![0.0; p.ambient_dim()];
    for a in 0..dim {
        for b in 0..dim {
            let c = xc[a] * yc[b];
            if c == 0.0 {
                continue;
            }
            let ba = second_cov(a, b)?;
            let ab = second_cov(b, a)?;
            axpy(c, &ba, &mut out);
            axpy(-c, &ab, &mut out);
        }
    }
    TangentVector::new(p.clone(), p.project(&out))
}
