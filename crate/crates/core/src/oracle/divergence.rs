use alloc::vec::Vec;

use crate::ambient::{ConformalFactor, ConformalJet};
use crate::error::Result;
use crate::exec::Executor;
use crate::immersion::Immersion;
use crate::linalg::{dot, exp, pairwise_sum};
use crate::stability::{factor_along_sigma, h_tilde_norm, MINIMALITY_TOL};

/// Both sides of
/// `∫ div_Σ(∇f) e^{(k−2)f} dg = −k∫|∇^⊥f|² e^{(k−2)f} dg − (k−2)∫|∇^⊤f|² e^{(k−2)f} dg`,
/// which holds on `g̃`-minimal `Σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `−∫ g(H,∇f) e^{(k−2)f} dg − (k−2)∫|∇^⊤f|² e^{(k−2)f} dg`, equal to
    /// `lhs` on every closed `Σ`.
    pub general_rhs: f64,
    pub sup_h_tilde: f64,
    /// Whether `Σ` is `g̃`-minimal, i.e. whether `rhs` is expected to match.
    pub asserted: bool,
}

impl DivergenceCheck {
    /// `residual ≤ 1e−6 (1 + |lhs|)`
    pub fn passes(&self) -> bool {
        self.residual <= 1e-6 * (1.0 + self.lhs.abs())
    }
}

pub fn divergence_identity_check<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: &dyn ConformalFactor,
) -> Result<DivergenceCheck> {
    let k = imm.k() as f64;
    let rows: Vec<[f64; 5]> = exec
        .map_indexed(imm.nodes().len(), |i| {
            let geom = imm.node_geometry(i)?;
            let jet = ConformalJet::new(f, &geom.point)?;
            let fs = factor_along_sigma(&geom.frame, &jet);
            let w = imm.nodes()[i].weight * geom.density * exp((k - 2.0) * jet.value);
            Ok([
                w * fs.div_sigma,
                w * fs.grad_perp_sq,
                w * fs.grad_top_sq,
                w * dot(&geom.shape.mean_curvature, &jet.grad),
                h_tilde_norm(&geom.frame, &geom.shape, &jet),
            ])
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let col = |c: usize| pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let (lhs, perp, top, h_dot) = (col(0), col(1), col(2), col(3));
    let rhs = -k * perp - (k - 2.0) * top;
    let sup_h_tilde = rows.iter().fold(0.0f64, |m, r| m.max(r[4]));
    Ok(DivergenceCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        general_rhs: -h_dot - (k - 2.0) * top,
        sup_h_tilde,
        asserted: sup_h_tilde < MINIMALITY_TOL,
    })
}
