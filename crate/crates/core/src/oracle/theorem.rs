use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ambient::{ConformalFactor, ConformalJet};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::immersion::Immersion;
use crate::linalg::{exp, pairwise_sum};
use crate::pinching::{extremal_sectional_at_point, stream_rng, PinchingEstimate};
use crate::stability::{
    conformal_trace_at, factor_along_sigma, k_sigma_normal_at, MINIMALITY_TOL,
};

/// Random streams for the per-node curvature extremes start here, clear of
/// the streams used for sampled points.
pub const NODE_STREAM_OFFSET: u64 = 1 << 40;

/// Slack for non-strict inequalities and identities, relative to `1 + |lhs|`.
const NONSTRICT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Equal,
    Less,
    LessEq,
    Greater,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Equal => "=",
            Relation::Less => "<",
            Relation::LessEq => "<=",
            Relation::Greater => ">",
        }
    }
}

/// One line of the chain. `margin ≥ 0` means the relation holds with room to
/// spare; for `Equal` it is `slack − |lhs − rhs|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub name: &'static str,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    pub asserted: bool,
}

impl Inequality {
    fn new(name: &'static str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let slack = NONSTRICT_SLACK * (1.0 + lhs.abs());
        let (margin, holds) = match relation {
            Relation::Equal => {
                let m = slack - (lhs - rhs).abs();
                (m, m >= 0.0)
            }
            Relation::Less => (rhs - lhs, rhs - lhs > 0.0),
            Relation::LessEq => (rhs - lhs, rhs - lhs >= -slack),
            Relation::Greater => (lhs - rhs, lhs - rhs > 0.0),
        };
        Self {
            name,
            lhs,
            relation,
            rhs,
            margin,
            holds,
            asserted: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Pass,
    Fail,
    /// `k ≥ n − 1/δ` or non-positive curvature: nothing is asserted.
    HypothesisUnmet,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::HypothesisUnmet => "hypothesis unmet",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremVerdict {
    pub status: VerdictStatus,
    pub reason: Option<String>,
    pub k: usize,
    pub n: usize,
    /// Sampled global pinching supplied by the caller.
    pub delta_lower: f64,
    /// `min(delta_lower, min_node min K̃ / max K̃)`, used by the dimension gate and the last step.
    pub delta_effective: f64,
    /// `n − 1/δ_eff`; since pinching is strict the theorem needs `k <` this.
    pub dimension_bound: f64,
    /// `tr_𝒱̃ Q̃^Σ`
    pub trace_qtilde: f64,
    pub vol_gtilde: f64,
    pub sup_h_tilde: f64,
    pub inequalities: Vec<Inequality>,
}

impl TheoremVerdict {
    pub fn failed(&self) -> Vec<&Inequality> {
        self.inequalities
            .iter()
            .filter(|i| i.asserted && !i.holds)
            .collect()
    }
}

/// Per-node integrands of the chain, already multiplied by the node weight and
/// the round density.
struct NodeTerms {
    /// `Σ_{i≠j} K̃(E_i,E_j) e^{kf}`
    tangential: f64,
    /// `e^{(k−2)f}`
    base: f64,
    /// `|∇^⊤f|² e^{(k−2)f}`
    top: f64,
    /// `|∇^⊥f|² e^{(k−2)f}`
    perp: f64,
    /// `tr_𝒱̃ q̃ e^{kf}`
    trace: f64,
    /// `(−K̃(Σ,NΣ) + k|∇^⊥f|² e^{−2f}) e^{kf}`
    trace_closed: f64,
    /// `(−K̃(Σ,NΣ) + Σ_{i≠j}K̃/(k−1)) e^{kf}`
    b1: f64,
    /// `e^{kf}`
    vol: f64,
    min_k: f64,
    max_k: f64,
    h_tilde: f64,
}

/// Evaluates the inequality chain of the nonexistence theorem on `Σ`:
///
/// 1. `∫ Σ_{i≠j} K̃(E_i,E_j) dg̃ = k(k−1)∫e^{(k−2)f} + (k−1)(k−2)∫|∇^⊤f|²e^{(k−2)f} + k(k−1)∫|∇^⊥f|²e^{(k−2)f}` (all `dg`)
/// 2. that right-hand side `> k(k−1)∫|∇^⊥f|²e^{(k−2)f} dg`
/// 3. `tr_𝒱̃ Q̃ < ∫(−K̃(Σ,NΣ) + Σ_{i≠j}K̃/(k−1)) dg̃ ≤ ∫(−k(n−k) min K̃ + k max K̃) dg̃
///    ≤ −k∫min K̃ (n − k − 1/δ) dg̃ < 0`
///
/// Per-node extremes come from the pinching estimator at the node, widened
/// by the frame planes themselves.
pub fn main_theorem_check<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: &dyn ConformalFactor,
    pinching: &PinchingEstimate,
    plane_budget: usize,
    seed: u64,
) -> Result<TheoremVerdict> {
    let (k, n) = (imm.k(), imm.n());
    if k < 2 {
        return Err(Error::InvalidArgument(
            "the theorem needs k ≥ 2 (sectional curvatures of tangent planes)".into(),
        ));
    }
    let kf = k as f64;
    let nf = n as f64;
    let basis: Vec<Vec<f64>> = (0..=n).map(|i| crate::linalg::unit(n + 1, i)).collect();
    let rows = exec
        .map_indexed(imm.nodes().len(), |i| -> Result<NodeTerms> {
            let geom = imm.node_geometry(i)?;
            let jet = ConformalJet::new(f, &geom.point)?;
            let w = imm.nodes()[i].weight * geom.density;
            let ekf = exp(kf * jet.value);
            let ek2 = exp((kf - 2.0) * jet.value);
            let fs = factor_along_sigma(&geom.frame, &jet);
            let t = &geom.frame.tangent;
            let mut tang = 0.0;
            let mut frame_lo = f64::INFINITY;
            let mut frame_hi = f64::NEG_INFINITY;
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        let s = jet.sectional(&t[a], &t[b]);
                        tang += s;
                        frame_lo = frame_lo.min(s);
                        frame_hi = frame_hi.max(s);
                    }
                }
                for r in &geom.frame.normal {
                    let s = jet.sectional(&t[a], r);
                    frame_lo = frame_lo.min(s);
                    frame_hi = frame_hi.max(s);
                }
            }
            let ks = k_sigma_normal_at(&geom.frame, &jet);
            let ct = conformal_trace_at(&geom.frame, &geom.shape, &jet, &basis, MINIMALITY_TOL);
            let mut rng = stream_rng(seed, NODE_STREAM_OFFSET + i as u64);
            let (min_k, max_k) =
                match extremal_sectional_at_point(f, &geom.point, plane_budget, &mut rng) {
                    Ok(e) => (e.min_k.min(frame_lo), e.max_k.max(frame_hi)),
                    Err(Error::NonPositiveCurvature { min_k }) => (min_k.min(frame_lo), frame_hi),
                    Err(e) => return Err(e),
                };
            Ok(NodeTerms {
                tangential: w * tang * ekf,
                base: w * ek2,
                top: w * fs.grad_top_sq * ek2,
                perp: w * fs.grad_perp_sq * ek2,
                trace: w * ct.trace * ekf,
                trace_closed: w * (-ks + kf * fs.grad_perp_sq * exp(-2.0 * jet.value)) * ekf,
                b1: w * (-ks + tang / (kf - 1.0)) * ekf,
                vol: w * ekf,
                min_k,
                max_k,
                h_tilde: ct.h_tilde_norm,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let sum = |g: &dyn Fn(&NodeTerms) -> f64| pairwise_sum(&rows.iter().map(g).collect::<Vec<_>>());
    let sup_h_tilde = rows.iter().fold(0.0f64, |m, r| m.max(r.h_tilde));
    if sup_h_tilde >= MINIMALITY_TOL {
        return Err(Error::NotMinimal { h_tilde: sup_h_tilde });
    }

    let node_ratio = rows
        .iter()
        .map(|r| r.min_k / r.max_k)
        .fold(f64::INFINITY, f64::min);
    let min_node_k = rows.iter().map(|r| r.min_k).fold(f64::INFINITY, f64::min);
    let delta_effective = pinching.delta_lower.min(node_ratio);
    let dimension_bound = nf - 1.0 / delta_effective;
    let gap = nf - kf - 1.0 / delta_effective;

    let l1 = sum(&|r| r.tangential);
    let p = kf * (kf - 1.0) * sum(&|r| r.perp);
    let r1 = kf * (kf - 1.0) * sum(&|r| r.base) + (kf - 1.0) * (kf - 2.0) * sum(&|r| r.top) + p;
    let trace = sum(&|r| r.trace);
    let trace_closed = sum(&|r| r.trace_closed);
    let b1 = sum(&|r| r.b1);
    let b2 = sum(&|r| (-kf * (nf - kf) * r.min_k + kf * r.max_k) * r.vol);
    let b3 = -kf * gap * sum(&|r| r.min_k * r.vol);
    let vol = sum(&|r| r.vol);

    let mut inequalities = alloc::vec![
        Inequality::new("tangential sectional identity", l1, Relation::Equal, r1),
        Inequality::new("strict normal-gradient bound", r1, Relation::Greater, p),
        Inequality::new("conformal trace closed form", trace, Relation::Equal, trace_closed),
        Inequality::new("trace below tangential bound", trace, Relation::Less, b1),
        Inequality::new("pointwise extremes bound", b1, Relation::LessEq, b2),
        Inequality::new("pinching bound", b2, Relation::LessEq, b3),
        Inequality::new("pinching bound negative", b3, Relation::Less, 0.0),
        Inequality::new("trace negative", trace, Relation::Less, 0.0),
    ];

    let hypothesis = if !(pinching.min_k > 0.0) || !(min_node_k > 0.0) {
        Some(format!(
            "non-positive sectional curvature (sampled min {:.6e}, nodes min {:.6e})",
            pinching.min_k, min_node_k
        ))
    } else if kf >= dimension_bound {
        // δ-pinching is strict, so admissible δ lie below every observed ratio
        Some(format!(
            "k = {k} is not below n − 1/δ = {dimension_bound:.6} for observed δ = {delta_effective:.6}"
        ))
    } else {
        None
    };
    let status = if hypothesis.is_some() {
        inequalities.iter_mut().for_each(|i| i.asserted = false);
        VerdictStatus::HypothesisUnmet
    } else if inequalities.iter().all(|i| i.holds) {
        VerdictStatus::Pass
    } else {
        VerdictStatus::Fail
    };
    Ok(TheoremVerdict {
        status,
        reason: hypothesis,
        k,
        n,
        delta_lower: pinching.delta_lower,
        delta_effective,
        dimension_bound,
        trace_qtilde: trace,
        vol_gtilde: vol,
        sup_h_tilde,
        inequalities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{AxialFactor, ConstantFactor};
    use crate::immersion::{make_canonical_with, ShapeSpec};
    use crate::pinching::delta_estimate;
    use crate::Sequential;
    use core::f64::consts::PI;

    #[test]
    fn round_great_sphere_passes() {
        let imm = make_canonical_with(&ShapeSpec::GreatSubsphere { k: 2, n: 5 }, 12).unwrap();
        let f = ConstantFactor::new(0.0);
        let est = delta_estimate(&Sequential, &f, 5, 4, 10, 7).unwrap();
        let v = main_theorem_check(&Sequential, &imm, &f, &est, 10, 7).unwrap();
        assert_eq!(v.status, VerdictStatus::Pass, "{v:?}");
        assert!((v.trace_qtilde + 6.0 * 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn axial_factor_passes() {
        let imm = make_canonical_with(&ShapeSpec::GreatSubsphere { k: 2, n: 5 }, 10).unwrap();
        let f = AxialFactor::new(0.05, 3);
        let est = delta_estimate(&Sequential, &f, 5, 10, 30, 3).unwrap();
        let v = main_theorem_check(&Sequential, &imm, &f, &est, 30, 3).unwrap();
        assert_eq!(v.status, VerdictStatus::Pass, "{v:#?}");
        assert!(v.trace_qtilde < 0.0);
    }

    #[test]
    fn dimension_gate_and_k_one() {
        // δ ≈ 1 and n − k = 1 < 1/δ only if δ < 1; force it with a small δ
        let imm = make_canonical_with(&ShapeSpec::GreatSubsphere { k: 2, n: 3 }, 8).unwrap();
        let f = ConstantFactor::new(0.0);
        let mut est = delta_estimate(&Sequential, &f, 3, 2, 5, 1).unwrap();
        est.delta_lower = 0.5;
        let v = main_theorem_check(&Sequential, &imm, &f, &est, 5, 1).unwrap();
        assert_eq!(v.status, VerdictStatus::HypothesisUnmet);
        assert!(v.inequalities.iter().all(|i| !i.asserted));

        let circle = make_canonical_with(&ShapeSpec::GreatSubsphere { k: 1, n: 3 }, 8).unwrap();
        assert!(matches!(
            main_theorem_check(&Sequential, &circle, &f, &est, 5, 1),
            Err(Error::InvalidArgument(_))
        ));
    }
}
