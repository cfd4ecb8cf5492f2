//! Builds the immersion and conformal factor described by a [`RunConfig`].

use std::sync::Arc;

use stabsphere_core::ambient::{AxialFactor, ConformalFactor, ConstantFactor, FiniteDifferenceFactor, HeightFactor};
use stabsphere_core::immersion::{make_canonical_with, Axis, Chart, FiniteDifferenceChart, Immersion};

use crate::config::{ConfigError, FactorConfig, RunConfig, ShapeConfig};
use crate::expr::Expression;

/// A user chart must land on the unit sphere to this accuracy at every node.
const CHART_SPHERE_TOL: f64 = 1e-8;

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

pub fn build_factor(cfg: &RunConfig) -> Result<Box<dyn ConformalFactor>, ConfigError> {
    let dim = cfg.n + 1;
    Ok(match &cfg.conformal_factor {
        FactorConfig::Constant { c } => Box::new(ConstantFactor::new(*c)),
        FactorConfig::Axial { epsilon, split } => Box::new(AxialFactor::new(*epsilon, split.unwrap_or(cfg.k + 1))),
        FactorConfig::Height { scale, direction } => Box::new(HeightFactor::new(*scale, direction.clone())),
        FactorConfig::Expression { expr } => {
            let mut probe = vec![0.0; dim];
            probe[0] = 1.0;
            let e = Expression::parse(expr, 'x', dim, &probe).map_err(|m| invalid("factor.expr", m))?;
            Box::new(FiniteDifferenceFactor::new(move |x| e.eval(x)))
        }
    })
}

pub fn build_immersion(cfg: &RunConfig) -> Result<Immersion, ConfigError> {
    if let Some(spec) = cfg.canonical_shape() {
        return make_canonical_with(&spec, cfg.resolution).map_err(|e| invalid("shape", e.to_string()));
    }
    let ShapeConfig::Chart { domain, map } = &cfg.shape else {
        unreachable!("non-canonical shapes are charts")
    };
    let k = cfg.k;
    let center: Vec<f64> = domain.iter().map(|a| 0.5 * (a.lo + a.hi)).collect();
    let coords = map
        .iter()
        .map(|s| Expression::parse(s, 'u', k, &center))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| invalid("shape.map", m))?;
    let coords = Arc::new(coords);
    let raw = {
        let coords = Arc::clone(&coords);
        move |u: &[f64]| coords.iter().map(|e| e.eval(u)).collect::<Vec<f64>>()
    };
    let axes = domain
        .iter()
        .map(|a| if a.periodic { Axis::periodic(a.lo, a.hi) } else { Axis::open(a.lo, a.hi) })
        .collect();
    let chart_map = FiniteDifferenceChart::new(k, cfg.n + 1, raw.clone());
    let imm = Immersion::new("user chart", k, cfg.n, vec![Chart::new(axes, Arc::new(chart_map))], cfg.resolution)
        .map_err(|e| invalid("shape", e.to_string()))?;
    for node in imm.nodes() {
        let x = raw(&node.u);
        let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((len - 1.0).abs() <= CHART_SPHERE_TOL) {
            return Err(invalid(
                "shape.map",
                format!("chart leaves the unit sphere at u = {:?} (|x| = {len})", node.u),
            ));
        }
    }
    Ok(imm)
}
