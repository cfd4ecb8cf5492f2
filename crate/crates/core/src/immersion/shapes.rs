//! Library of canonical submanifolds with exact chart derivatives.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Axis, Chart, Immersion, Trig, TrigProductChart, TrigTerm};
use crate::error::{Error, Result};
use crate::linalg::{cos, sin, sqrt};
use crate::quadrature::DEFAULT_NODES_PER_AXIS;

/// Relative tolerance on `Σ r_i² = 1` for product tori.
const RADII_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    /// Totally geodesic `S^k ⊂ S^n` in the first `k + 1` coordinates.
    GreatSubsphere { k: usize, n: usize },
    /// `{x ∈ S^{k+1} : x_{k+1} = cos θ}`, a round `S^k` of radius `sin θ`
    /// inside the great `S^{k+1}`.
    GeodesicSphere { k: usize, n: usize, theta: f64 },
    /// Minimal `S^p(√(p/(p+q))) × S^q(√(q/(p+q))) ⊂ S^{p+q+1} ⊂ S^n`.
    CliffordTorus { p: usize, q: usize, n: usize },
    /// `Π S^{d_i}(r_i)` with `Σ r_i² = 1`; minimal only for the Clifford radii.
    ProductTorus { factors: Vec<(usize, f64)>, n: usize },
}

impl ShapeSpec {
    pub fn k(&self) -> usize {
        match self {
            ShapeSpec::GreatSubsphere { k, .. } | ShapeSpec::GeodesicSphere { k, .. } => *k,
            ShapeSpec::CliffordTorus { p, q, .. } => p + q,
            ShapeSpec::ProductTorus { factors, .. } => factors.iter().map(|f| f.0).sum(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ShapeSpec::GreatSubsphere { n, .. }
            | ShapeSpec::GeodesicSphere { n, .. }
            | ShapeSpec::CliffordTorus { n, .. }
            | ShapeSpec::ProductTorus { n, .. } => *n,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ShapeSpec::GreatSubsphere { k, n } => format!("great S^{k} in S^{n}"),
            ShapeSpec::GeodesicSphere { k, n, theta } => {
                format!("geodesic S^{k}(theta = {theta}) in S^{n}")
            }
            ShapeSpec::CliffordTorus { p, q, n } => format!("Clifford S^{p} x S^{q} in S^{n}"),
            ShapeSpec::ProductTorus { factors, n } => {
                let parts: Vec<String> = factors
                    .iter()
                    .map(|(d, r)| format!("S^{d}({r})"))
                    .collect();
                format!("{} in S^{n}", parts.join(" x "))
            }
        }
    }

    /// `(dimension, radius)` of each round factor.
    fn factors(&self) -> Result<Vec<(usize, f64)>> {
        match self {
            ShapeSpec::GreatSubsphere { k, .. } => Ok(vec![(*k, 1.0)]),
            ShapeSpec::GeodesicSphere { k, theta, .. } => Ok(vec![(*k, sin(*theta))]),
            ShapeSpec::CliffordTorus { p, q, .. } => {
                let s = (p + q) as f64;
                Ok(vec![(*p, sqrt(*p as f64 / s)), (*q, sqrt(*q as f64 / s))])
            }
            ShapeSpec::ProductTorus { factors, .. } => Ok(factors.clone()),
        }
    }

    fn validate(&self) -> Result<()> {
        let (k, n) = (self.k(), self.n());
        match self {
            ShapeSpec::GeodesicSphere { theta, .. } => {
                if !(theta.is_finite() && *theta > 0.0 && *theta < PI) {
                    return Err(Error::DegenerateImmersion(format!(
                        "geodesic sphere angle {theta} must lie strictly between 0 and π"
                    )));
                }
                if k + 2 > n + 1 {
                    return Err(Error::Dimension(format!(
                        "geodesic S^{k} needs a great S^{} inside S^{n}",
                        k + 1
                    )));
                }
            }
            ShapeSpec::CliffordTorus { p, q, n } => {
                if *p == 0 || *q == 0 {
                    return Err(Error::Dimension("Clifford factors must have positive dimension".into()));
                }
                if p + q >= *n {
                    return Err(Error::Dimension(format!(
                        "S^{p} x S^{q} needs p + q < n, got n = {n}"
                    )));
                }
            }
            ShapeSpec::ProductTorus { factors, n } => {
                if factors.is_empty() || factors.iter().any(|(d, r)| *d == 0 || !(*r > 0.0)) {
                    return Err(Error::Domain(
                        "product factors need positive dimensions and radii".into(),
                    ));
                }
                let coords: usize = factors.iter().map(|(d, _)| d + 1).sum();
                if coords > n + 1 {
                    return Err(Error::Dimension(format!(
                        "product of spheres needs ℝ^{coords}, ambient is ℝ^{}",
                        n + 1
                    )));
                }
                let r2: f64 = factors.iter().map(|(_, r)| r * r).sum();
                if (r2 - 1.0).abs() > RADII_TOL {
                    return Err(Error::Domain(format!(
                        "squared radii sum to {r2}, not 1"
                    )));
                }
            }
            ShapeSpec::GreatSubsphere { .. } => {}
        }
        if k < 1 || k + 1 > n {
            return Err(Error::Dimension(format!("need 1 ≤ k ≤ n − 1, got k = {k}, n = {n}")));
        }
        Ok(())
    }

    /// Round `k`-volume in closed form.
    pub fn analytic_volume(&self) -> Result<f64> {
        self.validate()?;
        Ok(self
            .factors()?
            .iter()
            .map(|(d, r)| sphere_volume(*d, *r))
            .product())
    }
}

/// Volume of the round `S^m` of radius `r`: `2π^{(m+1)/2} r^m / Γ((m+1)/2)`.
pub fn sphere_volume(m: usize, r: f64) -> f64 {
    let h = (m as f64 + 1.0) / 2.0;
    2.0 * libm::pow(PI, h) * libm::pow(r, m as f64) / libm::tgamma(h)
}

/// Hyperspherical coordinates on `S^m(r)` using chart axes
/// `offset..offset + m`, one term per ambient coordinate.
fn hyperspherical_terms(m: usize, r: f64, offset: usize) -> Vec<TrigTerm> {
    (0..=m)
        .map(|i| {
            let mut factors: Vec<(usize, Trig)> = (0..i).map(|a| (offset + a, Trig::Sin)).collect();
            if i < m {
                factors.push((offset + i, Trig::Cos));
            }
            TrigTerm { coeff: r, factors }
        })
        .collect()
}

fn hyperspherical_axes(m: usize) -> Vec<Axis> {
    (0..m)
        .map(|a| {
            if a + 1 == m {
                Axis::periodic(0.0, 2.0 * PI)
            } else {
                Axis::open(0.0, PI)
            }
        })
        .collect()
}

pub fn make_canonical(spec: &ShapeSpec) -> Result<Immersion> {
    make_canonical_with(spec, DEFAULT_NODES_PER_AXIS)
}

pub fn make_canonical_with(spec: &ShapeSpec, resolution: usize) -> Result<Immersion> {
    spec.validate()?;
    let (k, n) = (spec.k(), spec.n());
    let mut terms = Vec::with_capacity(n + 1);
    let mut domain = Vec::with_capacity(k);
    let mut offset = 0;
    for (d, r) in spec.factors()? {
        terms.extend(hyperspherical_terms(d, r, offset));
        domain.extend(hyperspherical_axes(d));
        offset += d;
    }
    if let ShapeSpec::GeodesicSphere { theta, .. } = spec {
        terms.push(TrigTerm::constant(cos(*theta)));
    }
    while terms.len() < n + 1 {
        terms.push(TrigTerm::constant(0.0));
    }
    let chart = Chart::new(domain, Arc::new(TrigProductChart::new(k, terms)));
    Immersion::new(spec.label(), k, n, vec![chart], resolution)
}
