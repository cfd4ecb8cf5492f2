//! Sampled estimates of the sectional-curvature pinching of `(S^n, g̃)`.
//!
//! Everything here is an estimate: extremes are searched by random two-planes
//! followed by local ascent/descent on the Grassmannian, never certified.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::ambient::{AmbientPoint, ConformalFactor, ConformalJet};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::{axpy, cos, gram_schmidt, norm, remove_components, sin, unit};

pub const DEFAULT_POINT_BUDGET: usize = 200;
pub const DEFAULT_PLANE_BUDGET: usize = 500;
/// Maximum Jacobi sweeps per extremal candidate.
pub const REFINE_STEPS: usize = 200;

/// Independent random stream for work item `index`, so results do not depend
/// on how items are scheduled.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniformly distributed point of `S^n ⊂ ℝ^{ambient_dim}`.
pub fn random_point<R: Rng>(rng: &mut R, ambient_dim: usize) -> AmbientPoint {
    loop {
        if let Ok(p) = AmbientPoint::normalize(gaussian_vector(rng, ambient_dim)) {
            return p;
        }
    }
}

/// Uniformly distributed g-orthonormal pair spanning a two-plane of `T_pS^n`.
pub fn random_plane<R: Rng>(rng: &mut R, p: &AmbientPoint) -> (Vec<f64>, Vec<f64>) {
    let dim = p.ambient_dim();
    loop {
        let a = p.project(&gaussian_vector(rng, dim));
        let b = p.project(&gaussian_vector(rng, dim));
        if let Some(mut v) = gram_schmidt(&[a, b], 1e-8) {
            let y = v.pop().unwrap_or_default();
            let x = v.pop().unwrap_or_default();
            return (x, y);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionalExtremes {
    pub min_k: f64,
    pub max_k: f64,
    /// Plane realizing `min_k`.
    pub argmin: (Vec<f64>, Vec<f64>),
    /// Plane realizing `max_k`.
    pub argmax: (Vec<f64>, Vec<f64>),
    /// Accepted refinement steps, both searches together.
    pub refine_iters: usize,
}

/// Orthonormal basis of the complement of `span(p, x, y)`.
fn complement(p: &[f64], x: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
    let dim = p.len();
    let mut span = alloc::vec![p.to_vec(), x.to_vec(), y.to_vec()];
    let mut out = Vec::with_capacity(dim.saturating_sub(3));
    for i in 0..dim {
        if out.len() + 3 == dim {
            break;
        }
        let mut r = unit(dim, i);
        remove_components(&mut r, &span);
        remove_components(&mut r, &span);
        let len = norm(&r);
        if len > 1e-8 {
            r.iter_mut().for_each(|c| *c /= len);
            span.push(r.clone());
            out.push(r);
        }
    }
    out
}

/// Ascent of `sign · K̃` from the plane `(x, y)` by Jacobi sweeps: each step
/// rotates `x` (or `y`) toward one vector `w` of an orthonormal complement.
/// Along such a rotation `K̃(θ) = a + b cos 2θ + c sin 2θ`, so three values give
/// the best angle exactly. Returns the final value (without the sign), plane
/// and number of accepted rotations.
fn refine(
    jet: &ConformalJet,
    mut x: Vec<f64>,
    mut y: Vec<f64>,
    sign: f64,
) -> (f64, Vec<f64>, Vec<f64>, usize) {
    let objective = |x: &[f64], y: &[f64]| sign * jet.sectional(x, y);
    let rotate = |v: &[f64], w: &[f64], t: f64| {
        let mut out: Vec<f64> = v.iter().map(|c| cos(t) * c).collect();
        axpy(sin(t), w, &mut out);
        out
    };
    let mut ws = complement(jet.point.coords(), &x, &y);
    let mut value = objective(&x, &y);
    let mut accepted = 0;
    for _ in 0..REFINE_STEPS {
        let before = value;
        for j in 0..ws.len() {
            for moving_x in [true, false] {
                let (v, fixed) = if moving_x { (&x, &y) } else { (&y, &x) };
                let eval = |t: f64| {
                    let r = rotate(v, &ws[j], t);
                    if moving_x { objective(&r, fixed) } else { objective(fixed, &r) }
                };
                let a = value;
                let d = eval(core::f64::consts::FRAC_PI_2);
                let c = eval(core::f64::consts::FRAC_PI_4) - 0.5 * (a + d);
                let b = 0.5 * (a - d);
                let best = 0.5 * (a + d) + libm::sqrt(b * b + c * c);
                if best <= value {
                    continue;
                }
                let t = 0.5 * libm::atan2(c, b);
                let nv = rotate(v, &ws[j], t);
                let nw = rotate(&ws[j], v, -t);
                let candidate = eval(t);
                if candidate > value {
                    value = candidate;
                    if moving_x {
                        x = nv;
                    } else {
                        y = nv;
                    }
                    ws[j] = nw;
                    accepted += 1;
                }
            }
        }
        if value - before <= 1e-15 * (1.0 + value.abs()) {
            break;
        }
    }
    (sign * value, x, y, accepted)
}

/// Smallest and largest `K̃` over two-planes at `p`, from `budget` random
/// planes and refinement of the two extremal candidates.
pub fn extremal_sectional_at_point<R: Rng>(
    f: &dyn ConformalFactor,
    p: &AmbientPoint,
    budget: usize,
    rng: &mut R,
) -> Result<SectionalExtremes> {
    if budget == 0 {
        return Err(Error::InvalidArgument("plane budget must be at least 1".into()));
    }
    if p.sphere_dim() < 2 {
        return Err(Error::Dimension("two-planes need n ≥ 2".into()));
    }
    let jet = ConformalJet::new(f, p)?;
    let mut lo: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut hi: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..budget {
        let (x, y) = random_plane(rng, p);
        let k = jet.sectional(&x, &y);
        if lo.as_ref().is_none_or(|l| k < l.0) {
            lo = Some((k, x.clone(), y.clone()));
        }
        if hi.as_ref().is_none_or(|h| k > h.0) {
            hi = Some((k, x, y));
        }
    }
    let (_, lx, ly) = lo.ok_or_else(|| Error::InvalidArgument("no planes sampled".into()))?;
    let (_, hx, hy) = hi.ok_or_else(|| Error::InvalidArgument("no planes sampled".into()))?;
    let (min_k, mx, my, a) = refine(&jet, lx, ly, -1.0);
    let (max_k, xx, xy, b) = refine(&jet, hx, hy, 1.0);
    if !(min_k > 0.0) {
        return Err(Error::NonPositiveCurvature { min_k });
    }
    Ok(SectionalExtremes {
        min_k,
        max_k,
        argmin: (mx, my),
        argmax: (xx, xy),
        refine_iters: a + b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPinching {
    pub index: usize,
    pub point: Vec<f64>,
    pub min_k: f64,
    pub max_k: f64,
}

/// Sampled pinching of `(S^n, g̃)`. Pinching is pointwise, so `delta_lower` is
/// the smallest per-point ratio `min K̃(p) / max K̃(p)`; `min_k` and `max_k` are
/// the extremes over all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PinchingEstimate {
    pub delta_lower: f64,
    pub min_k: f64,
    pub max_k: f64,
    /// Random planes evaluated (points × planes per point).
    pub samples: usize,
    pub points: usize,
    pub planes_per_point: usize,
    pub refine_iters: usize,
    pub seed: u64,
    pub per_point: Vec<PointPinching>,
}

impl PinchingEstimate {
    /// `δ · max K̃(p) < min K̃(p)` at every sampled point, up to `1e-12`.
    pub fn pointwise_display_holds(&self) -> bool {
        self.per_point
            .iter()
            .all(|s| self.delta_lower * s.max_k < s.min_k + 1e-12)
    }
}

/// Extremes at the given points; point `i` uses random stream `i`.
pub fn extremes_at_points<E: Executor>(
    exec: &E,
    f: &dyn ConformalFactor,
    points: &[AmbientPoint],
    plane_budget: usize,
    seed: u64,
) -> Result<Vec<SectionalExtremes>> {
    exec.map_indexed(points.len(), |i| {
        let mut rng = stream_rng(seed, i as u64);
        extremal_sectional_at_point(f, &points[i], plane_budget, &mut rng)
    })
    .into_iter()
    .collect()
}

pub fn delta_estimate<E: Executor>(
    exec: &E,
    f: &dyn ConformalFactor,
    n: usize,
    point_budget: usize,
    plane_budget: usize,
    seed: u64,
) -> Result<PinchingEstimate> {
    if point_budget == 0 || plane_budget == 0 {
        return Err(Error::InvalidArgument("pinching budgets must be at least 1".into()));
    }
    let per_point = exec
        .map_indexed(point_budget, |i| {
            let mut rng = stream_rng(seed, i as u64);
            let p = random_point(&mut rng, n + 1);
            let e = extremal_sectional_at_point(f, &p, plane_budget, &mut rng)?;
            Ok((p, e))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let min_k = per_point.iter().map(|(_, e)| e.min_k).fold(f64::INFINITY, f64::min);
    let max_k = per_point
        .iter()
        .map(|(_, e)| e.max_k)
        .fold(f64::NEG_INFINITY, f64::max);
    let delta_lower = per_point
        .iter()
        .map(|(_, e)| e.min_k / e.max_k)
        .fold(f64::INFINITY, f64::min);
    Ok(PinchingEstimate {
        delta_lower,
        min_k,
        max_k,
        samples: point_budget * plane_budget,
        points: point_budget,
        planes_per_point: plane_budget,
        refine_iters: per_point.iter().map(|(_, e)| e.refine_iters).sum(),
        seed,
        per_point: per_point
            .into_iter()
            .enumerate()
            .map(|(index, (p, e))| PointPinching {
                index,
                point: p.coords().to_vec(),
                min_k: e.min_k,
                max_k: e.max_k,
            })
            .collect(),
    })
}
