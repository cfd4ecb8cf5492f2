//! Run reports: JSON with 17 significant digits, CSV tables, and a SHA-256
//! fingerprint of everything except timing.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Positive when the metric is on the passing side of its tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl Metric {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: None,
            margin: None,
        }
    }

    /// `value ≤ tolerance`, margin `tolerance − value`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
            margin: Some(tolerance - value),
        }
    }

    pub fn passes(&self) -> bool {
        self.margin.map_or(true, |m| m >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    /// Skipped checks and informational results are not asserted.
    pub asserted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub metrics: Vec<Metric>,
}

impl CheckOutcome {
    /// Pass iff every metric with a tolerance passes.
    pub fn from_metrics(name: &str, metrics: Vec<Metric>) -> Self {
        let ok = metrics.iter().all(Metric::passes);
        Self {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            asserted: true,
            reason: None,
            metrics,
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>, metrics: Vec<Metric>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            asserted: false,
            reason: Some(reason.into()),
            metrics,
        }
    }

    pub fn failed(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            asserted: true,
            reason: Some(reason.into()),
            metrics: Vec::new(),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.asserted && self.status == Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRow {
    pub node: usize,
    pub chart: usize,
    pub u: Vec<f64>,
    pub weight: f64,
    pub f: f64,
    pub tr_v_q: f64,
    pub tr_vtilde_qtilde: f64,
    pub rhs_curvature_form: Option<f64>,
    pub rhs_h_form: Option<f64>,
    pub h_tilde: f64,
    pub k_sigma_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchingRow {
    pub index: usize,
    pub min_k: f64,
    pub max_k: f64,
    pub ratio: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchingTable {
    pub delta_lower: f64,
    pub min_k: f64,
    pub max_k: f64,
    pub points: usize,
    pub planes_per_point: usize,
    pub seed: u64,
    pub rows: Vec<PinchingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    pub asserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictTable {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub delta_lower: f64,
    pub delta_effective: f64,
    pub dimension_bound: f64,
    pub trace_qtilde: f64,
    pub vol_gtilde: f64,
    pub sup_h_tilde: f64,
    pub inequalities: Vec<InequalityRow>,
}

/// Everything that is fingerprinted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBody {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinching: Option<PinchingTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub threads: usize,
    pub total_seconds: f64,
    pub checks: Vec<CheckTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    #[serde(flatten)]
    pub body: ReportBody,
    pub fingerprint: String,
    pub timing: Timing,
}

impl Report {
    pub fn new(body: ReportBody, timing: Timing) -> Self {
        let fingerprint = fingerprint(&body);
        Self {
            body,
            fingerprint,
            timing,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.body.checks.iter().filter(|c| c.is_failure())
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Pretty JSON whose floats are always written as `{:.16e}`.
struct FixedDigits(PrettyFormatter<'static>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for FixedDigits {
    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }
}

/// `{:.16e}`, i.e. 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report serializes");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Hex SHA-256 of the JSON body.
pub fn fingerprint(body: &ReportBody) -> String {
    format!("{:x}", Sha256::digest(to_json(body).as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the report into `dir` and returns the files written.
pub fn write_report(report: &Report, dir: &Path, format: Format) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let body = &report.body;
    let mut written = Vec::new();
    match format {
        Format::Json => {
            let path = dir.join("report.json");
            std::fs::write(&path, to_json(report) + "\n")?;
            written.push(path);
        }
        Format::Csv => {
            let path = dir.join("checks.csv");
            let rows = body.checks.iter().flat_map(|c| {
                let base = [c.name.clone(), c.status.as_str().into(), c.asserted.to_string()];
                let reason = c.reason.clone().unwrap_or_default();
                let mut rows: Vec<Vec<String>> = c
                    .metrics
                    .iter()
                    .map(|m| {
                        let mut r = base.to_vec();
                        r.extend([m.name.clone(), float(m.value), opt(m.tolerance), opt(m.margin), reason.clone()]);
                        r
                    })
                    .collect();
                if rows.is_empty() {
                    let mut r = base.to_vec();
                    r.extend([String::new(), String::new(), String::new(), String::new(), reason]);
                    rows.push(r);
                }
                rows
            });
            write_csv(
                &path,
                &strings(&["check", "status", "asserted", "metric", "value", "tolerance", "margin", "reason"]),
                rows,
            )?;
            written.push(path);

            if !body.nodes.is_empty() {
                let path = dir.join("nodes.csv");
                let k = body.nodes[0].u.len();
                let mut header = strings(&["node", "chart"]);
                header.extend((0..k).map(|i| format!("u{i}")));
                header.extend(strings(&[
                    "weight",
                    "f",
                    "tr_v_q",
                    "tr_vtilde_qtilde",
                    "rhs_curvature_form",
                    "rhs_h_form",
                    "h_tilde",
                    "k_sigma_normal",
                ]));
                let rows = body.nodes.iter().map(|r| {
                    let mut row = vec![r.node.to_string(), r.chart.to_string()];
                    row.extend(r.u.iter().copied().map(float));
                    row.extend([
                        float(r.weight),
                        float(r.f),
                        float(r.tr_v_q),
                        float(r.tr_vtilde_qtilde),
                        opt(r.rhs_curvature_form),
                        opt(r.rhs_h_form),
                        float(r.h_tilde),
                        float(r.k_sigma_normal),
                    ]);
                    row
                });
                write_csv(&path, &header, rows)?;
                written.push(path);
            }

            if let Some(p) = &body.pinching {
                let path = dir.join("pinching.csv");
                let dim = p.rows.first().map_or(0, |r| r.point.len());
                let mut header = strings(&["index", "min_k", "max_k", "ratio"]);
                header.extend((0..dim).map(|i| format!("x{i}")));
                let rows = p.rows.iter().map(|r| {
                    let mut row = vec![r.index.to_string(), float(r.min_k), float(r.max_k), float(r.ratio)];
                    row.extend(r.point.iter().copied().map(float));
                    row
                });
                write_csv(&path, &header, rows)?;
                written.push(path);
            }

            if let Some(v) = &body.verdict {
                let path = dir.join("verdict.csv");
                let rows = v.inequalities.iter().map(|i| {
                    vec![
                        i.name.clone(),
                        float(i.lhs),
                        i.relation.clone(),
                        float(i.rhs),
                        float(i.margin),
                        i.holds.to_string(),
                        i.asserted.to_string(),
                    ]
                });
                write_csv(
                    &path,
                    &strings(&["inequality", "lhs", "relation", "rhs", "margin", "holds", "asserted"]),
                    rows,
                )?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
