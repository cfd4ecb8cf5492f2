//! Executes the configured checks and assembles the report body.

use std::time::Instant;

use stabsphere_core::ambient::ConformalFactor;
use stabsphere_core::immersion::Immersion;
use stabsphere_core::oracle::{
    curvature_identity_suite, curvature_oracle_suite, divergence_identity_check, fd_second_variation, lemma_suite,
    main_theorem_check, TheoremVerdict, VerdictStatus,
};
use stabsphere_core::pinching::{delta_estimate, PinchingEstimate};
use stabsphere_core::stability::{q_integral, trace_report, Integrand, ProjectedConstantField, Rescaled, TraceReport};
use stabsphere_core::{Error, Executor};

use crate::config::{Check, ConfigError, RunConfig};
use crate::report::{
    CheckOutcome, CheckTiming, InequalityRow, Metric, NodeRow, PinchingRow, PinchingTable, ReportBody, VerdictTable,
};
use crate::setup::{build_factor, build_immersion};

/// Errors that mean the check does not apply rather than that it failed.
fn is_precondition(e: &Error) -> bool {
    matches!(
        e,
        Error::NotMinimal { .. }
            | Error::NonPositiveCurvature { .. }
            | Error::MissingDerivative(_)
            | Error::UnsupportedChart(_)
    )
}

fn needs_immersion(c: Check) -> bool {
    !matches!(c, Check::Identities | Check::Pinching | Check::CurvatureOracle)
}

struct Runner<'a, E: Executor> {
    exec: &'a E,
    cfg: &'a RunConfig,
    factor: Box<dyn ConformalFactor>,
    imm: Option<Immersion>,
    trace: Option<Result<TraceReport, Error>>,
    pinching: Option<Result<PinchingEstimate, Error>>,
    verdict: Option<TheoremVerdict>,
}

impl<E: Executor> Runner<'_, E> {
    fn seed(&self) -> u64 {
        self.cfg.seed.expect("validated: sampling checks have a seed")
    }

    fn imm(&self) -> &Immersion {
        self.imm.as_ref().expect("built for every immersion check")
    }

    fn trace(&mut self) -> Result<&TraceReport, Error> {
        if self.trace.is_none() {
            self.trace = Some(trace_report(self.exec, self.imm(), self.factor.as_ref(), None));
        }
        self.trace.as_ref().unwrap().as_ref().map_err(Clone::clone)
    }

    fn pinching(&mut self) -> Result<&PinchingEstimate, Error> {
        if self.pinching.is_none() {
            let p = self.cfg.pinching;
            self.pinching = Some(delta_estimate(
                self.exec,
                self.factor.as_ref(),
                self.cfg.n,
                p.points,
                p.planes,
                self.seed(),
            ));
        }
        self.pinching.as_ref().unwrap().as_ref().map_err(Clone::clone)
    }

    fn run(&mut self, check: Check) -> CheckOutcome {
        let name = check.name();
        let result = match check {
            Check::Identities => self.identities(),
            Check::TraceRound => self.trace_round(),
            Check::TraceConformal => self.trace_conformal(),
            Check::Pinching => self.pinching_check(),
            Check::Divergence => self.divergence(),
            Check::CurvatureOracle => self.curvature_oracle(),
            Check::SecondVariation => self.second_variation(),
            Check::Theorem => self.theorem(),
        };
        match result {
            Ok(o) => o,
            Err(e) if is_precondition(&e) => CheckOutcome::skipped(name, e.to_string(), Vec::new()),
            Err(e) => CheckOutcome::failed(name, e.to_string()),
        }
    }

    fn identities(&mut self) -> Result<CheckOutcome, Error> {
        let (count, seed, tol) = (self.cfg.oracle.instances, self.seed(), self.cfg.tolerances);
        let c = curvature_identity_suite(self.exec, count, seed)?;
        let l = lemma_suite(self.exec, count, seed)?;
        let a = tol.analytic;
        let i = tol.identity;
        Ok(CheckOutcome::from_metrics(
            Check::Identities.name(),
            vec![
                Metric::info("instances", count as f64),
                Metric::at_most("curvature_antisymmetry_xy", c.antisymmetry_xy, a),
                Metric::at_most("curvature_antisymmetry_zw", c.antisymmetry_zw, a),
                Metric::at_most("curvature_pair_symmetry", c.pair_symmetry, a),
                Metric::at_most("curvature_bianchi", c.bianchi, a),
                Metric::at_most("sectional_contraction", c.sectional, a),
                Metric::at_most("frame_orthonormality", c.frame_orthonormality, a),
                Metric::at_most("lemma_gradient", l.gradient, i),
                Metric::at_most("lemma_curvature", l.curvature, i),
                Metric::at_most("lemma_shape", l.shape, i),
                Metric::at_most("proposition", l.proposition, i),
                Metric::at_most("rescaled_trace", l.rescaled, i),
                Metric::at_most("rescaled_inner", l.rescaled_inner, i),
            ],
        ))
    }

    fn trace_round(&mut self) -> Result<CheckOutcome, Error> {
        let tol = self.cfg.tolerances.analytic;
        let t = self.trace()?;
        let expected = t.round_trace_expected();
        let integral_residual = (t.tr_v_q_integral - expected * t.vol_g).abs();
        Ok(CheckOutcome::from_metrics(
            Check::TraceRound.name(),
            vec![
                Metric::info("expected", expected),
                Metric::at_most("max_node_residual", t.max_round_residual(), tol),
                Metric::at_most("integral_residual", integral_residual, tol * (1.0 + t.vol_g * expected.abs())),
                Metric::info("integral", t.tr_v_q_integral),
                Metric::info("vol_g", t.vol_g),
            ],
        ))
    }

    fn trace_conformal(&mut self) -> Result<CheckOutcome, Error> {
        let tol = self.cfg.tolerances.identity;
        let t = self.trace()?;
        let base = vec![
            Metric::info("sup_h_tilde", t.sup_h_tilde),
            Metric::info("integral", t.tr_vtilde_qtilde_integral),
            Metric::info("vol_gtilde", t.vol_gtilde),
        ];
        let name = Check::TraceConformal.name();
        Ok(match t.max_conformal_discrepancy() {
            None => CheckOutcome::skipped(name, "Σ is not minimal for the conformal metric", base),
            Some(d) => {
                let mut m = vec![Metric::at_most("max_form_discrepancy", d, tol)];
                m.extend(base);
                CheckOutcome::from_metrics(name, m)
            }
        })
    }

    fn pinching_check(&mut self) -> Result<CheckOutcome, Error> {
        let n = self.cfg.n as f64;
        let k = self.cfg.k as f64;
        let est = self.pinching()?;
        let mut metrics = vec![
            Metric::info("delta_lower", est.delta_lower),
            Metric::info("min_k", est.min_k),
            Metric::info("max_k", est.max_k),
            Metric::info("dimension_bound", n - 1.0 / est.delta_lower),
            // positive when k ≤ n − 1/δ, i.e. the theorem applies
            Metric::info("dimension_margin", n - 1.0 / est.delta_lower - k),
        ];
        if !(est.min_k > 0.0) {
            return Ok(CheckOutcome::skipped(
                Check::Pinching.name(),
                "non-positive sampled curvature; pinching undefined",
                metrics,
            ));
        }
        let worst = est
            .per_point
            .iter()
            .map(|p| est.delta_lower * p.max_k - p.min_k)
            .fold(f64::NEG_INFINITY, f64::max);
        metrics.push(Metric::at_most("pointwise_display_excess", worst, 1e-12));
        Ok(CheckOutcome::from_metrics(Check::Pinching.name(), metrics))
    }

    fn divergence(&mut self) -> Result<CheckOutcome, Error> {
        let d = divergence_identity_check(self.exec, self.imm(), self.factor.as_ref())?;
        let tol = self.cfg.tolerances.identity * (1.0 + d.lhs.abs());
        let name = Check::Divergence.name();
        let general = Metric::at_most("general_residual", (d.lhs - d.general_rhs).abs(), tol);
        let info = vec![
            Metric::info("lhs", d.lhs),
            Metric::info("rhs", d.rhs),
            Metric::info("sup_h_tilde", d.sup_h_tilde),
        ];
        if !d.asserted {
            let mut m = vec![general];
            m.extend(info);
            let mut o = CheckOutcome::from_metrics(name, m);
            if o.status == crate::report::Status::Pass {
                o = CheckOutcome::skipped(
                    name,
                    "Σ is not minimal for the conformal metric; only the general form is checked",
                    o.metrics,
                );
            }
            return Ok(o);
        }
        let mut m = vec![Metric::at_most("residual", d.residual, tol), general];
        m.extend(info);
        Ok(CheckOutcome::from_metrics(name, m))
    }

    fn curvature_oracle(&mut self) -> Result<CheckOutcome, Error> {
        let o = &self.cfg.oracle;
        let r = curvature_oracle_suite(self.exec, o.curvature_instances, self.seed(), Some(o.curvature_step))?;
        let tol = self.cfg.tolerances;
        Ok(CheckOutcome::from_metrics(
            Check::CurvatureOracle.name(),
            vec![
                Metric::info("instances", r.instances as f64),
                Metric::info("step", r.step),
                Metric::at_most("general", r.general, tol.finite_difference),
                Metric::at_most("constant", r.constant, tol.identity),
            ],
        ))
    }

    fn second_variation(&mut self) -> Result<CheckOutcome, Error> {
        let dim = self.cfg.n + 1;
        let v = self.cfg.oracle.field.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; dim];
            e[dim - 1] = 1.0;
            e
        });
        let f = self.factor.as_ref();
        let inner = ProjectedConstantField::new(v);
        let field = Rescaled::new(&inner, f);
        let q = q_integral(self.exec, self.imm(), Some(f), Integrand::Field(&field))?;
        let sv = fd_second_variation(self.exec, self.imm(), f, &field, self.cfg.oracle.t_step)?;
        let tol = 1e-3f64.max(1e-2 * q.abs());
        let metrics = vec![
            Metric::at_most("discrepancy", (sv.value - q).abs(), tol),
            Metric::info("q_tilde", q),
            Metric::info("finite_difference", sv.value),
            Metric::info("d_t", sv.d_t),
            Metric::info("d_half", sv.d_half),
            Metric::info("sup_h_tilde", sv.sup_h_tilde),
        ];
        let name = Check::SecondVariation.name();
        Ok(if sv.asserted {
            CheckOutcome::from_metrics(name, metrics)
        } else {
            CheckOutcome::skipped(name, "Σ is not critical for the conformal volume", metrics)
        })
    }

    fn theorem(&mut self) -> Result<CheckOutcome, Error> {
        let seed = self.seed();
        let planes = self.cfg.pinching.planes;
        let est = self.pinching()?.clone();
        let v = main_theorem_check(self.exec, self.imm(), self.factor.as_ref(), &est, planes, seed)?;
        let mut metrics = vec![
            Metric::info("trace_qtilde", v.trace_qtilde),
            Metric::info("delta_lower", v.delta_lower),
            Metric::info("delta_effective", v.delta_effective),
            Metric::info("dimension_bound", v.dimension_bound),
        ];
        metrics.extend(v.inequalities.iter().map(|i| Metric {
            name: i.name.to_string(),
            value: i.lhs,
            tolerance: Some(i.rhs),
            margin: Some(i.margin),
        }));
        let name = Check::Theorem.name();
        let outcome = match v.status {
            VerdictStatus::Pass => CheckOutcome::from_metrics(name, Vec::new()),
            VerdictStatus::Fail => CheckOutcome::failed(
                name,
                format!(
                    "failed: {}",
                    v.failed().iter().map(|i| i.name).collect::<Vec<_>>().join(", ")
                ),
            ),
            VerdictStatus::HypothesisUnmet => CheckOutcome::skipped(
                name,
                v.reason.clone().unwrap_or_else(|| "hypothesis unmet".into()),
                Vec::new(),
            ),
        };
        self.verdict = Some(v);
        Ok(CheckOutcome { metrics, ..outcome })
    }
}

/// Output of [`run_checks`].
pub struct RunOutput {
    pub body: ReportBody,
    pub timings: Vec<CheckTiming>,
}

/// Runs `checks` (in canonical order) for `cfg`. Configuration problems,
/// including immersions that cannot be built, are returned as errors.
pub fn run_checks<E: Executor>(
    exec: &E,
    cfg: &RunConfig,
    checks: &[Check],
    command: &str,
) -> Result<RunOutput, ConfigError> {
    cfg.validate(checks)?;
    let factor = build_factor(cfg)?;
    let imm = if checks.iter().any(|&c| needs_immersion(c)) {
        Some(build_immersion(cfg)?)
    } else {
        None
    };
    let shape = imm.as_ref().map(|i| i.label().to_string());
    let mut runner = Runner {
        exec,
        cfg,
        factor,
        imm,
        trace: None,
        pinching: None,
        verdict: None,
    };
    let mut outcomes = Vec::new();
    let mut timings = Vec::new();
    for &c in Check::ALL.iter().filter(|c| checks.contains(c)) {
        let start = Instant::now();
        outcomes.push(runner.run(c));
        timings.push(CheckTiming {
            name: c.name().into(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let nodes = match &runner.trace {
        Some(Ok(t)) => {
            let imm = runner.imm();
            t.nodes
                .iter()
                .map(|nt| {
                    let q = &imm.nodes()[nt.node];
                    NodeRow {
                        node: nt.node,
                        chart: q.chart,
                        u: q.u.clone(),
                        weight: nt.round_weight,
                        f: nt.f_value,
                        tr_v_q: nt.tr_v_q,
                        tr_vtilde_qtilde: nt.conformal.trace,
                        rhs_curvature_form: nt.conformal.rhs_curvature_form,
                        rhs_h_form: nt.conformal.rhs_h_form,
                        h_tilde: nt.conformal.h_tilde_norm,
                        k_sigma_normal: nt.k_sigma_normal,
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let pinching = match &runner.pinching {
        Some(Ok(p)) => Some(PinchingTable {
            delta_lower: p.delta_lower,
            min_k: p.min_k,
            max_k: p.max_k,
            points: p.points,
            planes_per_point: p.planes_per_point,
            seed: p.seed,
            rows: p
                .per_point
                .iter()
                .map(|s| PinchingRow {
                    index: s.index,
                    min_k: s.min_k,
                    max_k: s.max_k,
                    ratio: s.min_k / s.max_k,
                    point: s.point.clone(),
                })
                .collect(),
        }),
        _ => None,
    };
    let verdict = runner.verdict.take().map(|v| VerdictTable {
        status: v.status.as_str().into(),
        reason: v.reason.clone(),
        delta_lower: v.delta_lower,
        delta_effective: v.delta_effective,
        dimension_bound: v.dimension_bound,
        trace_qtilde: v.trace_qtilde,
        vol_gtilde: v.vol_gtilde,
        sup_h_tilde: v.sup_h_tilde,
        inequalities: v
            .inequalities
            .iter()
            .map(|i| InequalityRow {
                name: i.name.into(),
                lhs: i.lhs,
                relation: i.relation.symbol().into(),
                rhs: i.rhs,
                margin: i.margin,
                holds: i.holds,
                asserted: i.asserted,
            })
            .collect(),
    });

    Ok(RunOutput {
        body: ReportBody {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            shape,
            checks: outcomes,
            nodes,
            pinching,
            verdict,
        },
        timings,
    })
}
