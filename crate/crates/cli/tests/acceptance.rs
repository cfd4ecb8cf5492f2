//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one pass/fail line; the process fails if any criterion does.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use stabsphere_core::ambient::{AxialFactor, ConformalFactor, ConstantFactor};
use stabsphere_core::immersion::{make_canonical, Immersion, ShapeSpec};
use stabsphere_core::oracle::{
    curvature_oracle_suite, divergence_identity_check, fd_second_variation, lemma_suite,
};
use stabsphere_core::stability::{q_integral, trace_report, Integrand, ProjectedConstantField, Rescaled};
use stabsphere_core::Sequential;

const SEED: u64 = 20240601;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core_err(e: stabsphere_core::Error) -> String {
    e.to_string()
}

fn minimal_configs() -> Vec<(String, Immersion, Box<dyn ConformalFactor>)> {
    let mut out: Vec<(String, Immersion, Box<dyn ConformalFactor>)> = Vec::new();
    for n in [4, 5] {
        let spec = ShapeSpec::GreatSubsphere { k: 2, n };
        let factors: Vec<(String, Box<dyn ConformalFactor>)> = vec![
            ("f = 0".into(), Box::new(ConstantFactor::new(0.0))),
            ("f = 0.3".into(), Box::new(ConstantFactor::new(0.3))),
            ("axial 0.02".into(), Box::new(AxialFactor::new(0.02, 3))),
            ("axial 0.05".into(), Box::new(AxialFactor::new(0.05, 3))),
        ];
        for (label, f) in factors {
            out.push((format!("{}, {label}", spec.label()), make_canonical(&spec).unwrap(), f));
        }
    }
    out
}

fn round_trace() -> Outcome {
    let shapes = [
        ShapeSpec::GreatSubsphere { k: 2, n: 4 },
        ShapeSpec::GreatSubsphere { k: 2, n: 5 },
        ShapeSpec::GeodesicSphere { k: 2, n: 4, theta: PI / 3.0 },
        ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 },
        ShapeSpec::ProductTorus {
            factors: vec![(1, (1.0f64 / 3.0).sqrt()), (2, (2.0f64 / 3.0).sqrt())],
            n: 4,
        },
    ];
    let f = ConstantFactor::new(0.0);
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for spec in &shapes {
        let start = Instant::now();
        let imm = make_canonical(spec).map_err(core_err)?;
        let t = trace_report(&Sequential, &imm, &f, None).map_err(core_err)?;
        let elapsed = start.elapsed();
        let r = t.max_round_residual();
        ensure(r <= 1e-8, || format!("{}: node residual {r:.3e}", spec.label()))?;
        ensure(elapsed < Duration::from_secs(10), || {
            format!("{}: {:.1} s", spec.label(), elapsed.as_secs_f64())
        })?;
        worst = worst.max(r);
        slowest = slowest.max(elapsed);
    }
    Ok(format!(
        "5 shapes, max residual {worst:.2e}, slowest {:.2} s",
        slowest.as_secs_f64()
    ))
}

fn conformal_trace() -> Outcome {
    let mut worst = 0.0f64;
    let configs = minimal_configs();
    for (label, imm, f) in &configs {
        let t = trace_report(&Sequential, imm, f.as_ref(), None).map_err(core_err)?;
        let d = t
            .max_conformal_discrepancy()
            .ok_or_else(|| format!("{label}: not minimal (sup |H̃| = {:.3e})", t.sup_h_tilde))?;
        ensure(d <= 1e-6, || format!("{label}: discrepancy {d:.3e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("{} configurations, max discrepancy {worst:.2e}", configs.len()))
}

fn lemmas() -> Outcome {
    let r = lemma_suite(&Sequential, 1000, SEED).map_err(core_err)?;
    ensure(r.instances == 1000, || format!("{} instances", r.instances))?;
    let parts = [
        ("gradient", r.gradient),
        ("curvature", r.curvature),
        ("shape", r.shape),
        ("proposition", r.proposition),
        ("rescaled", r.rescaled),
        ("rescaled inner product", r.rescaled_inner),
    ];
    for (name, v) in parts {
        ensure(v < 1e-6, || format!("{name} residual {v:.3e}"))?;
    }
    Ok(format!("1000 instances, max residual {:.2e}", r.max()))
}

fn curvature_oracle() -> Outcome {
    let r = curvature_oracle_suite(&Sequential, 200, SEED, None).map_err(core_err)?;
    ensure(r.instances == 200, || format!("{} instances", r.instances))?;
    ensure(r.general < 1e-4, || format!("general residual {:.3e}", r.general))?;
    ensure(r.constant < 1e-6, || format!("constant-factor residual {:.3e}", r.constant))?;
    Ok(format!("general {:.2e}, constant {:.2e}", r.general, r.constant))
}

fn second_variation() -> Outcome {
    let start = Instant::now();
    let spec = ShapeSpec::GreatSubsphere { k: 2, n: 4 };
    let imm = make_canonical(&spec).map_err(core_err)?;
    let normal = ProjectedConstantField::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    let expected = -8.0 * PI;

    let zero = ConstantFactor::new(0.0);
    let sv = fd_second_variation(&Sequential, &imm, &zero, &normal, 1e-3).map_err(core_err)?;
    let q = q_integral(&Sequential, &imm, Some(&zero), Integrand::Field(&normal)).map_err(core_err)?;
    ensure(sv.asserted, || "round case not asserted".into())?;
    ensure((sv.value - expected).abs() <= 0.01 * expected.abs(), || {
        format!("finite difference {} vs {expected}", sv.value)
    })?;
    ensure((q - expected).abs() <= 0.01 * expected.abs(), || format!("quadrature {q} vs {expected}"))?;

    let axial = AxialFactor::new(0.05, 3);
    let field = Rescaled::new(&normal, &axial);
    let sva = fd_second_variation(&Sequential, &imm, &axial, &field, 1e-3).map_err(core_err)?;
    let qa = q_integral(&Sequential, &imm, Some(&axial), Integrand::Field(&field)).map_err(core_err)?;
    ensure(sva.asserted, || "axial case not asserted".into())?;
    ensure((sva.value - qa).abs() <= 0.01 * qa.abs(), || {
        format!("axial finite difference {} vs quadrature {qa}", sva.value)
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("{:.1} s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "round {:.6} (Q {:.6}, expected {:.6}), axial {:.6} vs {:.6}, {:.2} s",
        sv.value,
        q,
        expected,
        sva.value,
        qa,
        elapsed.as_secs_f64()
    ))
}

fn divergence() -> Outcome {
    let mut worst = 0.0f64;
    let configs = minimal_configs();
    for (label, imm, f) in &configs {
        let d = divergence_identity_check(&Sequential, imm, f.as_ref()).map_err(core_err)?;
        ensure(d.asserted, || format!("{label}: not minimal"))?;
        let rel = d.residual / (1.0 + d.lhs.abs());
        ensure(rel < 1e-6, || format!("{label}: residual {:.3e} (lhs {})", d.residual, d.lhs))?;
        worst = worst.max(rel);
    }
    Ok(format!("{} configurations, max relative residual {worst:.2e}", configs.len()))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stabsphere")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn main_theorem() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let status = Command::new(bin())
        .args(["check-theorem", "--config"])
        .arg(configs_dir().join("axial_s2_s5.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(status.status.code() == Some(0), || {
        format!(
            "check-theorem exited {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stdout)
        )
    })?;
    ensure(elapsed < Duration::from_secs(300), || format!("{:.1} s", elapsed.as_secs_f64()))?;
    let text = std::fs::read_to_string(out.path().join("report.json")).map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let cfg = &report["config"];
    ensure(cfg["n"] == 5 && cfg["k"] == 2, || "unexpected dimensions".into())?;
    ensure(cfg["factor"]["epsilon"].as_f64() == Some(0.05), || "unexpected factor".into())?;
    let delta = report["pinching"]["delta_lower"].as_f64().ok_or("no pinching estimate")?;
    ensure(delta > 0.75, || format!("sampled δ = {delta}"))?;
    let verdict = &report["verdict"];
    ensure(verdict["status"] == "pass", || format!("verdict {}", verdict["status"]))?;
    let rows = verdict["inequalities"].as_array().ok_or("no inequalities")?;
    ensure(rows.len() == 8, || format!("{} inequalities", rows.len()))?;
    let mut min_margin = f64::INFINITY;
    for r in rows {
        let m = r["margin"].as_f64().unwrap_or(f64::NAN);
        ensure(r["holds"] == true && r["asserted"] == true && m > 0.0, || {
            format!("{}: margin {m:e}", r["name"])
        })?;
        min_margin = min_margin.min(m);
    }
    let trace = verdict["trace_qtilde"].as_f64().ok_or("no trace")?;
    ensure(trace < 0.0, || format!("tr Q̃ = {trace}"))?;
    Ok(format!(
        "δ = {delta:.4}, tr Q̃ = {trace:.4}, min margin {min_margin:.2e}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

/// The report with its timing section cut off; timing is the last field.
fn report_without_timing(dir: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    let cut = text.find("\n  \"timing\": {").ok_or("report has no timing section")?;
    Ok(text[..cut].to_string())
}

fn run_all(threads: usize, dir: &Path, format: &str) -> Result<(), String> {
    let status = Command::new(bin())
        .args(["all", "--config"])
        .arg(configs_dir().join("axial_s2_s5.toml"))
        .arg("--out")
        .arg(dir)
        .args(["--format", format, "--threads", &threads.to_string()])
        .env_remove("STABSPHERE_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.code() == Some(0), || {
        format!("`all` at {threads} threads exited {:?}", status.status.code())
    })
}

fn determinism() -> Outcome {
    let many = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut reports = Vec::new();
    let mut tables = Vec::new();
    for threads in [1, 1, many, many] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_all(threads, dir.path(), "json")?;
        reports.push(report_without_timing(dir.path())?);
        let csv_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_all(threads, csv_dir.path(), "csv")?;
        let mut files = Vec::new();
        for name in ["checks.csv", "nodes.csv", "pinching.csv", "verdict.csv"] {
            files.push(std::fs::read(csv_dir.path().join(name)).map_err(|e| format!("{name}: {e}"))?);
        }
        tables.push(files);
    }
    for (i, r) in reports.iter().enumerate().skip(1) {
        ensure(r == &reports[0], || format!("JSON report of run {i} differs from run 0"))?;
    }
    for (i, t) in tables.iter().enumerate().skip(1) {
        ensure(t == &tables[0], || format!("CSV tables of run {i} differ from run 0"))?;
    }
    Ok(format!("4 runs at 1 and {many} threads, {} report bytes identical", reports[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("round trace identity", round_trace),
        ("conformal trace forms", conformal_trace),
        ("transformation lemma suite", lemmas),
        ("conformal curvature oracle", curvature_oracle),
        ("second variation oracle", second_variation),
        ("divergence identity", divergence),
        ("main theorem chain", main_theorem),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: pass ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
