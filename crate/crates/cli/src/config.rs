//! Run configuration: a TOML file validated into [`RunConfig`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use stabsphere_core::immersion::ShapeSpec;
use stabsphere_core::pinching::{DEFAULT_PLANE_BUDGET, DEFAULT_POINT_BUDGET};

pub const DEFAULT_RESOLUTION: usize = 32;
pub const MIN_RESOLUTION: usize = 8;

/// A named check, in the order the full run executes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Identities,
    TraceRound,
    TraceConformal,
    Pinching,
    Divergence,
    CurvatureOracle,
    SecondVariation,
    Theorem,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Identities,
        Check::TraceRound,
        Check::TraceConformal,
        Check::Pinching,
        Check::Divergence,
        Check::CurvatureOracle,
        Check::SecondVariation,
        Check::Theorem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Identities => "identities",
            Check::TraceRound => "trace_round",
            Check::TraceConformal => "trace_conformal",
            Check::Pinching => "pinching",
            Check::Divergence => "divergence",
            Check::CurvatureOracle => "curvature_oracle",
            Check::SecondVariation => "second_variation",
            Check::Theorem => "theorem",
        }
    }

    /// Checks that draw random samples and therefore need a seed.
    pub fn needs_seed(self) -> bool {
        matches!(
            self,
            Check::Identities | Check::Pinching | Check::CurvatureOracle | Check::Theorem
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    GreatSubsphere,
    GeodesicSphere {
        theta: f64,
    },
    /// `S^p(√(p/(p+q))) × S^q(√(q/(p+q)))`
    CliffordTorus {
        p: usize,
        q: usize,
    },
    /// Products of round spheres `S^{d_i}(r_i)` with `Σ r_i² = 1`.
    ProductTorus {
        factors: Vec<(usize, f64)>,
    },
    /// A user chart: `map[i]` is an expression in `u0, u1, …` for coordinate
    /// `x_i`; derivatives are taken by central differences.
    Chart {
        domain: Vec<AxisConfig>,
        map: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorConfig {
    Constant {
        c: f64,
    },
    /// `ε|y|²` with `y` the coordinates from index `split` on (default `k + 1`).
    Axial {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<usize>,
    },
    /// `scale · ⟨direction, x⟩`
    Height {
        scale: f64,
        direction: Vec<f64>,
    },
    /// An expression in `x0, …, xn`; derivatives by central differences.
    Expression {
        expr: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinchingConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_planes")]
    pub planes: usize,
}

impl Default for PinchingConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_POINT_BUDGET,
            planes: DEFAULT_PLANE_BUDGET,
        }
    }
}

fn default_points() -> usize {
    DEFAULT_POINT_BUDGET
}

fn default_planes() -> usize {
    DEFAULT_PLANE_BUDGET
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_analytic")]
    pub analytic: f64,
    #[serde(default = "default_fd")]
    pub finite_difference: f64,
    /// Pairwise agreement of the three conformal trace forms.
    #[serde(default = "default_identity")]
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            analytic: default_analytic(),
            finite_difference: default_fd(),
            identity: default_identity(),
        }
    }
}

fn default_analytic() -> f64 {
    stabsphere_core::ANALYTIC_TOL
}

fn default_fd() -> f64 {
    stabsphere_core::FINITE_DIFFERENCE_TOL
}

fn default_identity() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Random instances for the identity suites.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Random instances for the finite-difference curvature oracle.
    #[serde(default = "default_curvature_instances")]
    pub curvature_instances: usize,
    #[serde(default = "default_curvature_step")]
    pub curvature_step: f64,
    #[serde(default = "default_t_step")]
    pub t_step: f64,
    /// Constant ambient vector whose rescaled normal projection drives the
    /// second variation; defaults to the last coordinate axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<f64>>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            curvature_instances: default_curvature_instances(),
            curvature_step: default_curvature_step(),
            t_step: default_t_step(),
            field: None,
        }
    }
}

fn default_instances() -> usize {
    1000
}

fn default_curvature_instances() -> usize {
    200
}

fn default_curvature_step() -> f64 {
    stabsphere_core::oracle::DEFAULT_CURVATURE_STEP
}

fn default_t_step() -> f64 {
    stabsphere_core::oracle::DEFAULT_T_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    pub shape: ShapeConfig,
    #[serde(rename = "factor")]
    pub conformal_factor: FactorConfig,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Empty means every check.
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub pinching: PinchingConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid { field: &'static str, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid { field, message } => write!(f, "invalid config field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses without validating; see [`RunConfig::validate`].
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The checks to run, in canonical order.
    pub fn effective_checks(&self) -> Vec<Check> {
        if self.checks.is_empty() {
            Check::ALL.to_vec()
        } else {
            Check::ALL.iter().copied().filter(|c| self.checks.contains(c)).collect()
        }
    }

    pub fn validate(&self, checks: &[Check]) -> Result<(), ConfigError> {
        if self.k < 2 {
            return Err(invalid(
                "k",
                format!("k = {} but the theory needs submanifolds of dimension k ≥ 2", self.k),
            ));
        }
        if self.k + 1 > self.n {
            return Err(invalid("k", format!("need k ≤ n − 1, got k = {}, n = {}", self.k, self.n)));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(invalid(
                "resolution",
                format!("{} nodes per axis is below the minimum of {MIN_RESOLUTION}", self.resolution),
            ));
        }
        if let Some(c) = checks.iter().find(|c| c.needs_seed()) {
            if self.seed.is_none() {
                return Err(invalid("seed", format!("check `{c}` samples randomly and needs a seed")));
            }
        }
        if self.pinching.points == 0 || self.pinching.planes == 0 {
            return Err(invalid("pinching", "point and plane budgets must be at least 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.analytic", t.analytic),
            ("tolerances.finite_difference", t.finite_difference),
            ("tolerances.identity", t.identity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("tolerances", format!("{name} must be positive, got {v}")));
            }
        }
        match &self.conformal_factor {
            FactorConfig::Height { direction, .. } if direction.len() != self.n + 1 => {
                return Err(invalid(
                    "factor.direction",
                    format!("expected {} components, got {}", self.n + 1, direction.len()),
                ));
            }
            FactorConfig::Axial { split: Some(s), .. } if *s > self.n + 1 => {
                return Err(invalid("factor.split", format!("split {s} exceeds n + 1 = {}", self.n + 1)));
            }
            _ => {}
        }
        if let Some(v) = &self.oracle.field {
            if v.len() != self.n + 1 {
                return Err(invalid(
                    "oracle.field",
                    format!("expected {} components, got {}", self.n + 1, v.len()),
                ));
            }
        }
        match &self.shape {
            ShapeConfig::Chart { domain, map } => {
                if domain.len() != self.k {
                    return Err(invalid("shape.domain", format!("expected {} axes, got {}", self.k, domain.len())));
                }
                if map.len() != self.n + 1 {
                    return Err(invalid("shape.map", format!("expected {} coordinates, got {}", self.n + 1, map.len())));
                }
                if domain.iter().any(|a| !(a.hi > a.lo)) {
                    return Err(invalid("shape.domain", "every axis needs lo < hi"));
                }
            }
            other => {
                let spec = self.shape_spec(other);
                if spec.k() != self.k || spec.n() != self.n {
                    return Err(invalid(
                        "shape",
                        format!("shape has k = {}, n = {} but config says k = {}, n = {}", spec.k(), spec.n(), self.k, self.n),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical shape description; `None` for user charts.
    pub fn canonical_shape(&self) -> Option<ShapeSpec> {
        match &self.shape {
            ShapeConfig::Chart { .. } => None,
            other => Some(self.shape_spec(other)),
        }
    }

    fn shape_spec(&self, shape: &ShapeConfig) -> ShapeSpec {
        let n = self.n;
        match shape {
            ShapeConfig::GreatSubsphere => ShapeSpec::GreatSubsphere { k: self.k, n },
            ShapeConfig::GeodesicSphere { theta } => ShapeSpec::GeodesicSphere { k: self.k, n, theta: *theta },
            ShapeConfig::CliffordTorus { p, q } => ShapeSpec::CliffordTorus { p: *p, q: *q, n },
            ShapeConfig::ProductTorus { factors } => ShapeSpec::ProductTorus { factors: factors.clone(), n },
            ShapeConfig::Chart { .. } => unreachable!("user charts have no canonical spec"),
        }
    }
}
