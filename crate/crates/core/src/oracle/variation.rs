use alloc::format;
use alloc::vec::Vec;

use crate::ambient::ConformalFactor;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::immersion::Immersion;
use crate::linalg::{axpy, cos, dot, exp, norm, pairwise_sum, sin, Matrix};
use crate::stability::{sup_h_tilde, NormalField, MINIMALITY_TOL};

pub const DEFAULT_T_STEP: f64 = 1e-3;
/// Chart-coordinate step for the derivative of the variation field.
pub const FD_VARIATION_CHART_STEP: f64 = 1e-5;

/// Round-geodesic flow `φ_t(p) = cos(t|V|) p + sin(t|V|) V/|V|` generated by a
/// normal field on `Σ`.
pub struct VariationPath<'a> {
    pub field: &'a dyn NormalField,
    pub t_step: f64,
}

/// `sin z / z`
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z * z / 6.0
    } else {
        sin(z) / z
    }
}

/// `(z cos z − sin z) / z³`, the derivative of `sinc` divided by `z`.
fn sinc_slope(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        -1.0 / 3.0 + z2 / 30.0 - z2 * z2 / 840.0
    } else {
        (z * cos(z) - sin(z)) / (z * z * z)
    }
}

/// Variation data at one node: point, chart Jacobian, field and its chart
/// derivatives.
struct NodeData {
    x: Vec<f64>,
    jac: Matrix,
    v: Vec<f64>,
    dv: Vec<Vec<f64>>,
    weight: f64,
}

impl VariationPath<'_> {
    fn node_data(&self, imm: &Immersion, i: usize) -> Result<NodeData> {
        let node = &imm.nodes()[i];
        let geom = imm.local_geometry(node.chart, &node.u)?;
        let v = self.field.jet(&geom)?.value;
        let h = FD_VARIATION_CHART_STEP;
        let mut dv = Vec::with_capacity(imm.k());
        for a in 0..imm.k() {
            let mut u = node.u.clone();
            u[a] += h;
            let plus = self.field.jet(&imm.local_geometry(node.chart, &u)?)?.value;
            u[a] -= 2.0 * h;
            let minus = self.field.jet(&imm.local_geometry(node.chart, &u)?)?.value;
            let mut d = plus;
            axpy(-1.0, &minus, &mut d);
            d.iter_mut().for_each(|c| *c /= 2.0 * h);
            dv.push(d);
        }
        Ok(NodeData {
            x: geom.point.coords().to_vec(),
            jac: geom.jac,
            v,
            dv,
            weight: node.weight,
        })
    }

    /// `e^{k f(φ_t)} √det(∂φ_tᵀ∂φ_t)` times the node weight.
    fn deformed_density(nd: &NodeData, f: &dyn ConformalFactor, t: f64) -> f64 {
        let s = norm(&nd.v);
        let z = t * s;
        let (c, sc, sl) = (cos(z), sinc(z), sinc_slope(z));
        let mut phi = nd.x.iter().map(|xi| c * xi).collect::<Vec<f64>>();
        axpy(t * sc, &nd.v, &mut phi);
        let k = nd.dv.len();
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                let vdv = dot(&nd.v, &nd.dv[a]);
                let mut col: Vec<f64> = nd.jac.column(a).iter().map(|j| c * j).collect();
                axpy(-t * t * sc * vdv, &nd.x, &mut col);
                axpy(t * t * t * sl * vdv, &nd.v, &mut col);
                axpy(t * sc, &nd.dv[a], &mut col);
                col
            })
            .collect();
        let g = Matrix::from_columns(&cols).gram();
        let det = g.cholesky().map_or(0.0, |l| {
            (0..k).map(|i| l[(i, i)] * l[(i, i)]).product::<f64>()
        });
        nd.weight * libm::sqrt(det) * exp(k as f64 * f.value(&phi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondVariation {
    /// Richardson value `(4 D(t/2) − D(t)) / 3`.
    pub value: f64,
    /// `[v(t) − 2v(0) + v(−t)] / t²`
    pub d_t: f64,
    pub d_half: f64,
    pub t_step: f64,
    /// `vol_g̃(Σ)`
    pub volume: f64,
    pub sup_h_tilde: f64,
    /// Off a `g̃`-critical `Σ` the value is not the second variation form and
    /// is reported without assertion.
    pub asserted: bool,
}

/// `d²/dt² vol_g̃(φ_t(Σ))` at `t = 0` by central differences and Richardson
/// extrapolation over `t` and `t/2`.
pub fn fd_second_variation<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: &dyn ConformalFactor,
    field: &dyn NormalField,
    t_step: f64,
) -> Result<SecondVariation> {
    if !(t_step > 0.0 && t_step < 1.0) {
        return Err(Error::StepSize(t_step));
    }
    let path = VariationPath { field, t_step };
    let data = exec
        .map_indexed(imm.nodes().len(), |i| path.node_data(imm, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ts = [0.0, t_step, -t_step, 0.5 * t_step, -0.5 * t_step];
    let vols: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let terms: Vec<f64> = data
                .iter()
                .map(|nd| VariationPath::deformed_density(nd, f, t))
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let d_t = (vols[1] - 2.0 * vols[0] + vols[2]) / (t_step * t_step);
    let half = 0.5 * t_step;
    let d_half = (vols[3] - 2.0 * vols[0] + vols[4]) / (half * half);
    let value = (4.0 * d_half - d_t) / 3.0;
    let tol = 1e-3f64.max(1e-2 * value.abs());
    if !((d_t - d_half).abs() <= tol) {
        return Err(Error::Resolution(format!(
            "second differences disagree: D(t) = {d_t}, D(t/2) = {d_half}"
        )));
    }
    let h = sup_h_tilde(exec, imm, f)?;
    Ok(SecondVariation {
        value,
        d_t,
        d_half,
        t_step,
        volume: vols[0],
        sup_h_tilde: h,
        asserted: h < MINIMALITY_TOL,
    })
}

/// `d/dt vol_g̃(φ_t(Σ))` at `t = 0` by a central difference.
pub fn fd_first_variation<E: Executor>(
    exec: &E,
    imm: &Immersion,
    f: &dyn ConformalFactor,
    field: &dyn NormalField,
    t_step: f64,
) -> Result<f64> {
    if !(t_step > 0.0 && t_step < 1.0) {
        return Err(Error::StepSize(t_step));
    }
    let path = VariationPath { field, t_step };
    let data = exec
        .map_indexed(imm.nodes().len(), |i| path.node_data(imm, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let vol = |t: f64| {
        pairwise_sum(
            &data
                .iter()
                .map(|nd| VariationPath::deformed_density(nd, f, t))
                .collect::<Vec<_>>(),
        )
    };
    Ok((vol(t_step) - vol(-t_step)) / (2.0 * t_step))
}
