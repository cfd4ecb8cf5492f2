use alloc::vec::Vec;

use rand::Rng;

use crate::ambient::{AmbientPoint, ConformalJet, ConstantFactor, QuadraticFactor, TangentVector};
use crate::error::Result;
use crate::exec::Executor;
use crate::immersion::{AdaptedFrame, ShapeData};
use crate::linalg::{axpy, dot, gram_schmidt, max_abs_diff, scaled, Matrix};
use crate::pinching::{gaussian_vector, random_point, stream_rng};
use crate::stability::{
    factor_along_sigma, lemma_corrections, q_round, q_tilde_direct, q_tilde_minimal_rhs,
    q_tilde_rescaled_rhs, rescale_jet, FieldJet,
};

use super::curvature::{fd_curvature_check, DEFAULT_CURVATURE_STEP};

/// A random pointwise configuration: point, adapted frame, abstract second
/// fundamental form, normal field jet and quadratic conformal factor.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub frame: AdaptedFrame,
    pub shape: ShapeData,
    pub field: FieldJet,
    pub factor: QuadraticFactor,
}

impl RandomInstance {
    pub fn jet(&self) -> Result<ConformalJet> {
        ConformalJet::new(&self.factor, &self.frame.point)
    }
}

fn orthonormal_tangent_basis<R: Rng>(rng: &mut R, p: &AmbientPoint) -> Vec<Vec<f64>> {
    let dim = p.ambient_dim();
    loop {
        let vs: Vec<Vec<f64>> = (0..dim - 1)
            .map(|_| p.project(&gaussian_vector(rng, dim)))
            .collect();
        if let Some(b) = gram_schmidt(&vs, 1e-6) {
            return b;
        }
    }
}

fn random_normal<R: Rng>(rng: &mut R, normal: &[Vec<f64>], scale: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; normal[0].len()];
    for e in normal {
        axpy(scale * rng.sample::<f64, _>(rand_distr::StandardNormal), e, &mut out);
    }
    out
}

pub fn random_quadratic_factor<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> QuadraticFactor {
    let c = scale * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let a = scaled(scale, &gaussian_vector(rng, dim));
    let b = gaussian_vector(rng, dim * dim);
    QuadraticFactor::new(c, a, Matrix::from_fn(dim, dim, |i, j| scale * b[i * dim + j]))
}

/// Draws an instance with `3 ≤ n ≤ 6`, `1 ≤ k ≤ n − 1`. With `minimal`, the
/// trace of `A` is shifted so that `H = k ∇^⊥f`, i.e. `H̃ = 0`.
pub fn random_instance<R: Rng>(rng: &mut R, minimal: bool) -> Result<RandomInstance> {
    let n = rng.random_range(3..=6usize);
    let k = rng.random_range(1..n);
    let p = random_point(rng, n + 1);
    let mut basis = orthonormal_tangent_basis(rng, &p);
    let normal = basis.split_off(k);
    let frame = AdaptedFrame {
        point: p,
        tangent: basis,
        normal,
    };
    let factor = random_quadratic_factor(rng, n + 1, 0.5);
    let mut a = alloc::vec![Vec::new(); k * k];
    for i in 0..k {
        for j in i..k {
            let v = random_normal(rng, &frame.normal, 1.0);
            a[j * k + i] = v.clone();
            a[i * k + j] = v;
        }
    }
    if minimal {
        let jet = ConformalJet::new(&factor, &frame.point)?;
        let mut h = alloc::vec![0.0; n + 1];
        for i in 0..k {
            axpy(1.0, &a[i * k + i], &mut h);
        }
        let mut shift = scaled(k as f64, &frame.normal_part(&jet.grad));
        axpy(-1.0, &h, &mut shift);
        for i in 0..k {
            axpy(1.0 / k as f64, &shift, &mut a[i * k + i]);
        }
    }
    let shape = ShapeData::new(k, a)?;
    let field = FieldJet {
        value: random_normal(rng, &frame.normal, 1.0),
        nabla_perp: (0..k).map(|_| random_normal(rng, &frame.normal, 1.0)).collect(),
    };
    Ok(RandomInstance {
        frame,
        shape,
        field,
        factor,
    })
}

/// Largest absolute residuals of each identity over a batch of instances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LemmaResiduals {
    pub instances: usize,
    /// `|∇̃^⊥V|²` identity
    pub gradient: f64,
    /// curvature-trace identity
    pub curvature: f64,
    /// second fundamental form identity
    pub shape: f64,
    /// minimal-case transformation of `q̃(V,V)`
    pub proposition: f64,
    /// minimal-case `q̃(Ṽ,Ṽ)` for `Ṽ = e^{−f}V`
    pub rescaled: f64,
    /// `g̃(Ṽ_α, Ṽ_β) − g(V_α, V_β)` for the rescaled field
    pub rescaled_inner: f64,
}

impl LemmaResiduals {
    pub fn max(&self) -> f64 {
        [
            self.gradient,
            self.curvature,
            self.shape,
            self.proposition,
            self.rescaled,
            self.rescaled_inner,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(self, o: Self) -> Self {
        Self {
            instances: self.instances + o.instances,
            gradient: self.gradient.max(o.gradient),
            curvature: self.curvature.max(o.curvature),
            shape: self.shape.max(o.shape),
            proposition: self.proposition.max(o.proposition),
            rescaled: self.rescaled.max(o.rescaled),
            rescaled_inner: self.rescaled_inner.max(o.rescaled_inner),
        }
    }
}

/// Residuals of the transformation identities at one instance: the direct
/// `g̃`-frame evaluation against `q` plus the closed-form corrections.
pub fn lemma_residuals(inst: &RandomInstance) -> Result<LemmaResiduals> {
    let jet = inst.jet()?;
    let (fr, sh, fj) = (&inst.frame, &inst.shape, &inst.field);
    let direct = q_tilde_direct(fr, sh, fj, &jet);
    let round = q_round(fr, sh, fj);
    let c = lemma_corrections(fr, sh, fj, &jet);
    let mut out = LemmaResiduals {
        instances: 1,
        gradient: (direct.grad_term - round.grad_term - c.grad).abs(),
        curvature: (direct.curv_term - round.curv_term - c.curv).abs(),
        shape: (direct.shape_term - round.shape_term - c.shape).abs(),
        ..Default::default()
    };
    let tilde = rescale_jet(fj, &jet, fr);
    // g̃(Ṽ,Ṽ) = e^{2f} e^{−2f} |V|²
    out.rescaled_inner = (jet.metric(&tilde.value, &tilde.value) - dot(&fj.value, &fj.value)).abs();
    if let Ok(rhs) = q_tilde_minimal_rhs(fr, sh, fj, &jet, 1e-8) {
        out.proposition = (direct.total - rhs).abs();
        let rhs = q_tilde_rescaled_rhs(fr, sh, fj, &jet, 1e-8)?;
        out.rescaled = (q_tilde_direct(fr, sh, &tilde, &jet).total - rhs).abs();
    }
    Ok(out)
}

/// Runs [`lemma_residuals`] on `count` instances; instance `i` draws from
/// stream `i` of `seed` and alternates between general and `g̃`-minimal data.
pub fn lemma_suite<E: Executor>(exec: &E, count: usize, seed: u64) -> Result<LemmaResiduals> {
    let rows = exec
        .map_indexed(count, |i| {
            let mut rng = stream_rng(seed, i as u64);
            lemma_residuals(&random_instance(&mut rng, i % 2 == 1)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold(LemmaResiduals::default(), LemmaResiduals::merge))
}

/// Largest residuals of the algebraic identities of `R̃` and `K̃` over random
/// factors, points and tangent vectors; inner products are taken in `g̃`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvatureResiduals {
    pub instances: usize,
    pub antisymmetry_xy: f64,
    pub antisymmetry_zw: f64,
    pub pair_symmetry: f64,
    pub bianchi: f64,
    /// `K̃(X,Y)` against the contracted `g̃(R̃(X,Y)X,Y)/(|X|²_g̃|Y|²_g̃ − g̃(X,Y)²)`
    pub sectional: f64,
    /// Gram matrix of `e^{−f}E_α` in `g̃` against the identity.
    pub frame_orthonormality: f64,
}

impl CurvatureResiduals {
    pub fn max(&self) -> f64 {
        [
            self.antisymmetry_xy,
            self.antisymmetry_zw,
            self.pair_symmetry,
            self.bianchi,
            self.sectional,
            self.frame_orthonormality,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn curvature_residuals_at<R: Rng>(rng: &mut R) -> Result<CurvatureResiduals> {
    let n = rng.random_range(2..=6usize);
    let p = random_point(rng, n + 1);
    let f = random_quadratic_factor(rng, n + 1, 0.5);
    let jet = ConformalJet::new(&f, &p)?;
    let t = |rng: &mut R| p.project(&gaussian_vector(rng, n + 1));
    let (x, y, z, w) = (t(rng), t(rng), t(rng), t(rng));
    let rm = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| jet.metric(&jet.curvature(a, b, c), d);
    let r = rm(&x, &y, &z, &w);
    let mut bianchi = jet.curvature(&x, &y, &z);
    axpy(1.0, &jet.curvature(&y, &z, &x), &mut bianchi);
    axpy(1.0, &jet.curvature(&z, &x, &y), &mut bianchi);

    let basis = orthonormal_tangent_basis(rng, &p);
    let (e1, e2) = (&basis[0], &basis[1.min(basis.len() - 1)]);
    let sectional = if n >= 2 {
        let denom = jet.metric(e1, e1) * jet.metric(e2, e2) - jet.metric(e1, e2) * jet.metric(e1, e2);
        (jet.sectional(e1, e2) - rm(e1, e2, e1, e2) / denom).abs()
    } else {
        0.0
    };
    let s = crate::linalg::exp(-jet.value);
    let scaled_basis: Vec<Vec<f64>> = basis.iter().map(|e| scaled(s, e)).collect();
    let mut ortho: f64 = 0.0;
    for (a, u) in scaled_basis.iter().enumerate() {
        for (b, v) in scaled_basis.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            ortho = ortho.max((jet.metric(u, v) - target).abs());
        }
    }
    let scale = 1.0 + r.abs();
    Ok(CurvatureResiduals {
        instances: 1,
        antisymmetry_xy: (r + rm(&y, &x, &z, &w)).abs() / scale,
        antisymmetry_zw: (r + rm(&x, &y, &w, &z)).abs() / scale,
        pair_symmetry: (r - rm(&z, &w, &x, &y)).abs() / scale,
        bianchi: bianchi.iter().fold(0.0, |m, v| m.max(v.abs())),
        sectional,
        frame_orthonormality: ortho,
    })
}

/// Tensor identities of `R̃` on `count` random instances.
pub fn curvature_identity_suite<E: Executor>(exec: &E, count: usize, seed: u64) -> Result<CurvatureResiduals> {
    let rows = exec
        .map_indexed(count, |i| curvature_residuals_at(&mut stream_rng(seed, i as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold(CurvatureResiduals::default(), |a, b| CurvatureResiduals {
        instances: a.instances + b.instances,
        antisymmetry_xy: a.antisymmetry_xy.max(b.antisymmetry_xy),
        antisymmetry_zw: a.antisymmetry_zw.max(b.antisymmetry_zw),
        pair_symmetry: a.pair_symmetry.max(b.pair_symmetry),
        bianchi: a.bianchi.max(b.bianchi),
        sectional: a.sectional.max(b.sectional),
        frame_orthonormality: a.frame_orthonormality.max(b.frame_orthonormality),
    }))
}

/// Worst disagreement between the closed-form `R̃(X,Y)Z` and
/// [`fd_curvature_check`] at step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureOracleResiduals {
    pub instances: usize,
    pub step: f64,
    /// Random quadratic factors.
    pub general: f64,
    /// `f ≡ 0` and `f ≡ c` at the same points and vectors.
    pub constant: f64,
}

pub fn curvature_oracle_suite<E: Executor>(
    exec: &E,
    count: usize,
    seed: u64,
    h: Option<f64>,
) -> Result<CurvatureOracleResiduals> {
    let h = h.unwrap_or(DEFAULT_CURVATURE_STEP);
    let rows = exec
        .map_indexed(count, |i| -> Result<(f64, f64)> {
            let mut rng = stream_rng(seed, i as u64);
            let n = rng.random_range(2..=5usize);
            let p = random_point(&mut rng, n + 1);
            let f = random_quadratic_factor(&mut rng, n + 1, 0.3);
            // orthonormal X, Y and a unit Z spanning a random direction
            let b = orthonormal_tangent_basis(&mut rng, &p);
            let mut zv = scaled(rng.random_range(-1.0..1.0), &b[0]);
            axpy(rng.random_range(-1.0..1.0), &b[1], &mut zv);
            if n > 2 {
                axpy(rng.random_range(-1.0..1.0), &b[2], &mut zv);
            }
            let zn = crate::linalg::norm(&zv);
            let t = |v: Vec<f64>| TangentVector::new(p.clone(), v);
            let (x, y, z) = (t(b[0].clone())?, t(b[1].clone())?, t(scaled(1.0 / zn, &zv))?);
            let c = ConstantFactor::new(rng.random_range(-1.0..1.0));
            let general = {
                let exact = ConformalJet::new(&f, &p)?.curvature(x.vec(), y.vec(), z.vec());
                max_abs_diff(&exact, fd_curvature_check(&f, &x, &y, &z, h)?.vec())
            };
            let mut constant: f64 = 0.0;
            for g in [ConstantFactor::new(0.0), c] {
                let exact = ConformalJet::new(&g, &p)?.curvature(x.vec(), y.vec(), z.vec());
                constant = constant.max(max_abs_diff(&exact, fd_curvature_check(&g, &x, &y, &z, h)?.vec()));
            }
            Ok((general, constant))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CurvatureOracleResiduals {
        instances: count,
        step: h,
        general: rows.iter().fold(0.0, |m, r| m.max(r.0)),
        constant: rows.iter().fold(0.0, |m, r| m.max(r.1)),
    })
}

/// `|∇^⊤f|² + |∇^⊥f|² = |∇f|²` along the instance frame, used as a smoke
/// check of the frame split.
pub fn gradient_split_residual(inst: &RandomInstance) -> Result<f64> {
    let fs = factor_along_sigma(&inst.frame, &inst.jet()?);
    Ok((fs.grad_top_sq + fs.grad_perp_sq - fs.grad_sq).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Sequential;

    #[test]
    fn lemma_suite_is_tight() {
        let r = lemma_suite(&Sequential, 200, 11).unwrap();
        assert_eq!(r.instances, 200);
        assert!(r.max() < 1e-9, "{r:?}");
        assert!(r.proposition > 0.0 || r.rescaled > 0.0 || r.max() < 1e-15);
    }

    #[test]
    fn minimal_instances_have_vanishing_h_tilde() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, true).unwrap();
            let jet = inst.jet().unwrap();
            assert!(crate::stability::h_tilde_norm(&inst.frame, &inst.shape, &jet) < 1e-12);
            assert!(gradient_split_residual(&inst).unwrap() < 1e-12);
        }
    }

    #[test]
    fn curvature_identities_hold() {
        let r = curvature_identity_suite(&Sequential, 200, 3).unwrap();
        assert!(r.max() < 1e-10, "{r:?}");
    }

    #[test]
    fn curvature_oracle_small_batch() {
        let r = curvature_oracle_suite(&Sequential, 20, 9, None).unwrap();
        assert!(r.general < 1e-4 && r.constant < 1e-6, "{r:?}");
    }
}
