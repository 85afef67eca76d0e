//! JSON run report.

use std::collections::BTreeMap;
use std::path::Path;

use octrl_core::checks::CheckReport;
use octrl_core::oracle::ObjectiveComparison;
use octrl_core::problem::ProblemSpec;
use octrl_core::solver::{LinearizationReport, ShootingResult};
use octrl_core::verify::{Certificate, NecessaryReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub file: Option<String>,
    pub overrides: BTreeMap<String, f64>,
    /// SHA-256 of the canonical JSON form of the loaded problem.
    pub fingerprint: String,
    pub spec: ProblemSpec,
}

impl ProblemEcho {
    pub fn new(file: Option<&Path>, overrides: BTreeMap<String, f64>, spec: ProblemSpec) -> Self {
        Self {
            file: file.map(|p| p.display().to_string()),
            overrides,
            fingerprint: fingerprint(&spec),
            spec,
        }
    }
}

pub fn fingerprint(spec: &ProblemSpec) -> String {
    let canonical = serde_json::to_string(spec).expect("problem specs serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub grid: octrl_core::oracle::DiscretizedProblem,
    pub value_at_x0: f64,
    pub infeasible_nodes: usize,
    pub pin_shortfall: f64,
    pub greedy_c0: f64,
    pub solver_c0: f64,
    pub c0_rel_diff: f64,
    /// `j_a` is the greedy oracle path, `j_b` the solver path.
    pub comparison: ObjectiveComparison,
    pub rel_gap: f64,
    pub rel_gap_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub c0: Option<f64>,
    pub x_star: Option<f64>,
    pub mu_stable: Option<f64>,
    pub mu_unstable: Option<f64>,
    pub tvc_proxy: Option<f64>,
    pub verified: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example1Summary {
    pub c0_closed_form: f64,
    pub c0_solver: f64,
    pub c0_rel_err: f64,
    pub c0_tol: f64,
    pub tvc_proxy_at_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub problem: Option<ProblemEcho>,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<ErrorInfo>,
    pub checks: Option<CheckReport>,
    pub shooting: Option<ShootingResult>,
    pub linearization: Option<LinearizationReport>,
    pub necessary: Option<NecessaryReport>,
    pub certificate: Option<Certificate>,
    pub oracle: Option<OracleSummary>,
    pub sweep: Option<SweepSummary>,
    pub example1: Option<Example1Summary>,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str, argv: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            argv,
            config,
            problem: None,
            status: Status::Error,
            exit_code: 2,
            error: None,
            checks: None,
            shooting: None,
            linearization: None,
            necessary: None,
            certificate: None,
            oracle: None,
            sweep: None,
            example1: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
