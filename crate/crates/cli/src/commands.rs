use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use octrl_core::checks::{
    assumption_suite, builtin_certificate, CheckConfig, SampleBox, ScalingCertificate, UtilityFamily,
};
use octrl_core::hamiltonian::{euler_residuals, multiplier_from_path, MultiplierPath};
use octrl_core::oracle::{backward_induction, compare_objectives, DiscretizedProblem, Terminal};
use octrl_core::problem::{AdmissiblePath, ProblemSpec};
use octrl_core::solver::{default_horizon, linearize, shoot, ShootingConfig, ShootingResult};
use octrl_core::verify::{certify_sufficient, closed_form_example1, verify_necessary, VerifyTolerances};
use rayon::prelude::*;

use crate::args::*;
use crate::csvio::{read_path_csv, write_trajectory_csv, TrajectoryTable};
use crate::report::*;
use crate::CliError;

type Outcome = Result<bool, CliError>;

/// Largest relative gap between the oracle and solver objectives accepted
/// by `oracle`.
pub const ORACLE_REL_GAP_TOL: f64 = 1e-2;
/// Relative error of the shot `c(0)` accepted by `example1`.
pub const EXAMPLE1_C0_TOL: f64 = 1e-6;

pub fn config_json(cmd: &Command) -> serde_json::Value {
    let v = match cmd {
        Command::Check(a) => serde_json::to_value(a),
        Command::Solve(a) => serde_json::to_value(a),
        Command::Verify(a) => serde_json::to_value(a),
        Command::Oracle(a) => serde_json::to_value(a),
        Command::Sweep(a) => serde_json::to_value(a),
        Command::Example1(a) => serde_json::to_value(a),
    };
    v.unwrap_or(serde_json::Value::Null)
}

pub fn report_path(cmd: &Command) -> Option<&Path> {
    let out = match cmd {
        Command::Check(a) => &a.output,
        Command::Solve(a) => &a.output,
        Command::Verify(a) => &a.output,
        Command::Oracle(a) => &a.output,
        Command::Sweep(a) => &a.output,
        Command::Example1(a) => &a.output,
    };
    out.report.as_deref()
}

pub fn dispatch(cmd: &Command, report: &mut RunReport) -> Outcome {
    match cmd {
        Command::Check(a) => check(a, report),
        Command::Solve(a) => solve(a, report),
        Command::Verify(a) => verify(a, report),
        Command::Oracle(a) => oracle(a, report),
        Command::Sweep(a) => sweep(a, report),
        Command::Example1(a) => example1(a, report),
    }
}

fn timed<T>(report: &mut RunReport, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    report.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

fn overrides(p: &ProblemArgs) -> BTreeMap<String, f64> {
    p.set.iter().cloned().collect()
}

fn load_problem(p: &ProblemArgs, extra: &[(String, f64)], report: &mut RunReport) -> Result<ProblemSpec, CliError> {
    let mut ov = overrides(p);
    ov.extend(extra.iter().cloned());
    let spec = ProblemSpec::load(&p.problem, &ov)?;
    report.problem = Some(ProblemEcho::new(Some(&p.problem), ov, spec.clone()));
    Ok(spec)
}

fn certificate(a: &CertificateArgs) -> Result<Option<ScalingCertificate>, CliError> {
    let family = match (a.family, a.sigma) {
        (None, _) => return Ok(None),
        (Some(Family::Log), _) => UtilityFamily::Log,
        (Some(Family::Crra), Some(sigma)) => UtilityFamily::Crra(sigma),
        (Some(Family::Crra), None) => return Err(CliError::Usage("--family crra needs --sigma".into())),
    };
    Ok(Some(builtin_certificate(family, a.lambda_bar)?))
}

fn check_config(a: &CertificateArgs) -> Result<CheckConfig, CliError> {
    if a.grid < 2 {
        return Err(CliError::Usage(format!("--grid {} is below 2", a.grid)));
    }
    Ok(CheckConfig {
        samples: SampleBox {
            per_axis: a.grid,
            ..SampleBox::default()
        },
        ..CheckConfig::default()
    })
}

fn shooting_config(a: &ShootArgs) -> Result<ShootingConfig, CliError> {
    if a.n_report < 3 {
        return Err(CliError::Usage(format!("--n-report {} is below 3", a.n_report)));
    }
    if let Some(h) = a.horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::Usage(format!("--T {h} is not a positive horizon")));
        }
    }
    if !(a.tol_c0 > 0.0 && a.tol_tvc > 0.0) {
        return Err(CliError::Usage("tolerances must be positive".into()));
    }
    Ok(ShootingConfig {
        horizon: a.horizon,
        tol_c0: a.tol_c0,
        tol_tvc: a.tol_tvc,
        n_report: a.n_report,
        ..ShootingConfig::default()
    })
}

/// `λ`, Euler residual and `λx` alongside the path.
fn trajectory_table(spec: &ProblemSpec, path: &AdmissiblePath, m: Option<&MultiplierPath>) -> TrajectoryTable {
    let lambda = match m {
        Some(m) => m.lambda.clone(),
        None => multiplier_from_path(spec, path).map_or_else(|_| vec![f64::NAN; path.len()], |m| m.lambda),
    };
    let tvc_proxy = lambda.iter().zip(&path.x).map(|(l, x)| l * x).collect();
    TrajectoryTable {
        t: path.t.clone(),
        x: path.x.clone(),
        c: path.c.clone(),
        euler_residual: euler_residuals(spec, path),
        lambda,
        tvc_proxy,
    }
}

fn print_checks(r: &octrl_core::checks::CheckReport) {
    for rec in &r.records {
        let margin = rec
            .worst
            .as_ref()
            .map_or(String::from("-"), |w| format!("{:.3e}", w.margin));
        println!(
            "  {:<4} {:<36} worst margin {margin}",
            if rec.pass { "PASS" } else { "FAIL" },
            rec.name
        );
    }
}

fn check(a: &CheckArgs, report: &mut RunReport) -> Outcome {
    let spec = load_problem(&a.problem, &[], report)?;
    let cert = certificate(&a.certificate)?;
    let cfg = check_config(&a.certificate)?;
    let checks = timed(report, "checks", || assumption_suite(&spec, cert.as_ref(), &cfg));
    print_checks(&checks);
    let pass = checks.pass();
    report.checks = Some(checks);
    Ok(pass)
}

fn solve(a: &SolveArgs, report: &mut RunReport) -> Outcome {
    let spec = load_problem(&a.problem, &[], report)?;
    let cfg = shooting_config(&a.shoot)?;
    let res = timed(report, "shoot", || shoot(&spec, &cfg))?;
    if let Some(ss) = &res.steady_state {
        report.linearization = linearize(&spec, ss).ok();
    }
    let path = res.trajectory.to_path()?;
    let tol = VerifyTolerances {
        tvc: a.shoot.tol_tvc,
        ..VerifyTolerances::default()
    };
    let necessary = timed(report, "verify", || {
        verify_necessary(&spec, &path, Some(&res.multiplier), None, &tol, &CheckConfig::default())
    });
    if let Some(out) = &a.out {
        write_trajectory_csv(out, &trajectory_table(&spec, &path, Some(&res.multiplier)))?;
    }
    println!(
        "  c0 = {:.12}  T = {}  tvc proxy = {:.3e}  verified = {}",
        res.c0, res.horizon, res.tvc_proxy_at_t, res.verified
    );
    println!("  necessary conditions: {}", verdict_text(&necessary.verdict));
    let pass = res.verified && necessary.verdict.is_consistent();
    report.shooting = Some(res);
    report.necessary = Some(necessary);
    Ok(pass)
}

fn verdict_text(v: &octrl_core::verify::Verdict) -> String {
    match v {
        octrl_core::verify::Verdict::Consistent => "consistent".into(),
        octrl_core::verify::Verdict::Violated {
            condition,
            t,
            value,
            threshold,
        } => {
            let at = t.map_or(String::new(), |t| format!(" at t = {t}"));
            format!("{condition} violated{at}: {value:.3e} > {threshold:.3e}")
        }
    }
}

fn verify(a: &VerifyArgs, report: &mut RunReport) -> Outcome {
    let spec = load_problem(&a.problem, &[], report)?;
    let file = read_path_csv(&a.path)?;
    let cert = certificate(&a.certificate)?;
    let cfg = check_config(&a.certificate)?;
    let tol = VerifyTolerances::default();
    let m = file.multiplier.as_ref();
    let necessary = timed(report, "necessary", || {
        verify_necessary(&spec, &file.path, m, cert.as_ref(), &tol, &cfg)
    });
    let certificate = timed(report, "sufficient", || certify_sufficient(&spec, &file.path, m, &tol));
    println!("  necessary conditions: {}", verdict_text(&necessary.verdict));
    println!(
        "  sufficiency: optimal = {}  unique = {}",
        certificate.optimal, certificate.unique
    );
    for note in &certificate.notes {
        println!("    {note}");
    }
    let pass = necessary.verdict.is_consistent() && certificate.optimal;
    report.necessary = Some(necessary);
    report.certificate = Some(certificate);
    Ok(pass)
}

fn interpolate(t: &[f64], y: &[f64], at: f64) -> f64 {
    let k = t.partition_point(|s| *s <= at).clamp(1, t.len() - 1);
    let w = (at - t[k - 1]) / (t[k] - t[k - 1]);
    y[k - 1] + w * (y[k] - y[k - 1])
}

fn oracle(a: &OracleArgs, report: &mut RunReport) -> Outcome {
    let spec = load_problem(&a.problem, &[], report)?;
    if !(a.horizon > 0.0 && a.horizon.is_finite()) {
        return Err(CliError::Usage(format!("--T {} is not a positive horizon", a.horizon)));
    }
    let end = spec.t0 + a.horizon;
    let mut cfg = ShootingConfig::default();
    cfg.horizon = Some(default_horizon(spec.theta, cfg.tol_tvc).max(a.horizon));
    let res = timed(report, "shoot", || shoot(&spec, &cfg))?;
    let solver_path = res.trajectory.to_path()?;
    if solver_path.horizon() < end {
        return Err(CliError::Numeric(format!(
            "solver path stops at t = {} before the oracle horizon {end}",
            solver_path.horizon()
        )));
    }

    let upto = solver_path.t.partition_point(|t| *t <= end);
    let (lo, hi) = solver_path.x[..upto]
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    let x_max = a.x_max.unwrap_or(1.2 * hi.max(spec.x0));
    let x_min = a.x_min.unwrap_or((0.5 * lo.min(spec.x0)).max(1e-3 * x_max));
    let terminal = match a.terminal {
        TerminalRule::Free => Terminal::Free,
        TerminalRule::Pin => Terminal::Pin(
            a.pin
                .unwrap_or_else(|| interpolate(&solver_path.t, &solver_path.x, end)),
        ),
    };
    let d = DiscretizedProblem::new(a.dt, a.horizon, a.nx, x_min, x_max, terminal)?;
    let sol = timed(report, "backward_induction", || backward_induction(&spec, &d))?;

    if let Some(table) = &a.table {
        let file = std::fs::File::create(table)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", table.display())))?;
        sol.write_table_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", table.display())))?;
    }
    let greedy = sol.greedy.to_path()?;
    if let Some(out) = &a.out {
        write_trajectory_csv(out, &trajectory_table(&spec, &greedy, None))?;
    }
    let comparison = compare_objectives(&spec, &greedy, &solver_path, end)?;
    let rel_gap = comparison.gap / comparison.j_b.abs().max(f64::MIN_POSITIVE);
    let greedy_c0 = sol.greedy.c[0];
    let summary = OracleSummary {
        grid: d,
        value_at_x0: sol.value_at_x0,
        infeasible_nodes: sol.infeasible_nodes,
        pin_shortfall: sol.greedy.pin_shortfall,
        greedy_c0,
        solver_c0: res.c0,
        c0_rel_diff: (greedy_c0 - res.c0) / res.c0,
        comparison,
        rel_gap,
        rel_gap_tol: ORACLE_REL_GAP_TOL,
    };
    println!(
        "  oracle c0 = {greedy_c0:.6}  solver c0 = {:.6}  J oracle = {:.6}  J solver = {:.6}  rel gap = {rel_gap:.3e}",
        res.c0, comparison.j_a, comparison.j_b
    );
    let pass = rel_gap.abs() <= ORACLE_REL_GAP_TOL;
    report.shooting = Some(res);
    report.oracle = Some(summary);
    Ok(pass)
}

fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var("OCTRL_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("OCTRL_THREADS = \"{s}\" is not a positive integer"))),
        Err(_) => Ok(0),
    }
}

fn sweep_row(a: &SweepArgs, cfg: &ShootingConfig, value: f64) -> SweepRow {
    let mut row = SweepRow {
        value,
        c0: None,
        x_star: None,
        mu_stable: None,
        mu_unstable: None,
        tvc_proxy: None,
        verified: false,
        error: None,
    };
    let mut ov = overrides(&a.problem);
    ov.insert(a.param.clone(), value);
    let res: Result<ShootingResult, String> = ProblemSpec::load(&a.problem.problem, &ov)
        .map_err(|e| e.to_string())
        .and_then(|spec| {
            let res = shoot(&spec, cfg).map_err(|e| e.to_string())?;
            if let Some(ss) = &res.steady_state {
                row.x_star = Some(ss.x_star);
                if let Some((s, u)) = linearize(&spec, ss).ok().and_then(|l| l.saddle_rates()) {
                    row.mu_stable = Some(s);
                    row.mu_unstable = Some(u);
                }
            }
            Ok(res)
        });
    match res {
        Ok(res) => {
            row.c0 = Some(res.c0);
            row.tvc_proxy = Some(res.tvc_proxy_at_t);
            row.verified = res.verified;
        }
        Err(e) => row.error = Some(e),
    }
    row
}

fn write_sweep_csv(path: &Path, param: &str, rows: &[SweepRow]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        param,
        "c0",
        "x_star",
        "mu_stable",
        "mu_unstable",
        "tvc_proxy",
        "verified",
        "error",
    ])
    .map_err(|e| fail(&e))?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.value),
            opt(r.c0),
            opt(r.x_star),
            opt(r.mu_stable),
            opt(r.mu_unstable),
            opt(r.tvc_proxy),
            r.verified.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| fail(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| fail(&e))?;
    std::fs::write(path, bytes).map_err(|e| fail(&e))
}

fn sweep(a: &SweepArgs, report: &mut RunReport) -> Outcome {
    let spec = load_problem(&a.problem, &[], report)?;
    if !spec.params.contains_key(&a.param) {
        let known: Vec<&str> = spec.params.keys().map(String::as_str).collect();
        return Err(CliError::Usage(format!(
            "unknown parameter `{}`; the problem defines [{}]",
            a.param,
            known.join(", ")
        )));
    }
    if a.n == 0 || !a.from.is_finite() || !a.to.is_finite() {
        return Err(CliError::Usage("need --n >= 1 and a finite range".into()));
    }
    let cfg = shooting_config(&a.shoot)?;
    let values: Vec<f64> = if a.n == 1 {
        vec![a.from]
    } else {
        (0..a.n)
            .map(|k| a.from + (a.to - a.from) * k as f64 / (a.n - 1) as f64)
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads()?)
        .build()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut rows: Vec<SweepRow> = timed(report, "sweep", || {
        pool.install(|| values.par_iter().map(|v| sweep_row(a, &cfg, *v)).collect())
    });
    rows.sort_by(|p, q| p.value.total_cmp(&q.value));
    for r in &rows {
        match (&r.error, r.c0) {
            (Some(e), _) => println!("  {} = {:<12} error: {e}", a.param, r.value),
            (None, Some(c0)) => println!(
                "  {} = {:<12} c0 = {c0:.10}  verified = {}",
                a.param, r.value, r.verified
            ),
            _ => {}
        }
    }
    if let Some(out) = &a.out {
        write_sweep_csv(out, &a.param, &rows)?;
    }
    let pass = rows.iter().all(|r| r.verified);
    report.sweep = Some(SweepSummary {
        param: a.param.clone(),
        rows,
    });
    Ok(pass)
}

fn example1(a: &Example1Args, report: &mut RunReport) -> Outcome {
    if a.nodes < 3 || !(a.horizon > 0.0 && a.horizon.is_finite()) {
        return Err(CliError::Usage("need --nodes >= 3 and a positive --T".into()));
    }
    let spec = ProblemSpec::linear_wealth(a.theta, "ln(c)", &format!("{:?}", a.r), &format!("{:?}", a.omega), a.x0)?;
    report.problem = Some(ProblemEcho::new(None, BTreeMap::new(), spec.clone()));
    let grid: Vec<f64> = (0..a.nodes)
        .map(|k| a.horizon * k as f64 / (a.nodes - 1) as f64)
        .collect();
    let (path, m) = closed_form_example1(a.r, a.omega, a.theta, a.x0, &grid)?;

    let cfg = ShootingConfig {
        horizon: Some(a.horizon),
        n_report: a.nodes,
        ..ShootingConfig::default()
    };
    let res = timed(report, "shoot", || shoot(&spec, &cfg))?;
    let c0_closed_form = path.c[0];
    let c0_rel_err = (res.c0 - c0_closed_form).abs() / c0_closed_form;

    let tol = VerifyTolerances::default();
    let cert = builtin_certificate(UtilityFamily::Log, 0.5)?;
    let necessary = timed(report, "necessary", || {
        verify_necessary(&spec, &path, Some(&m), Some(&cert), &tol, &CheckConfig::default())
    });
    let certificate = timed(report, "sufficient", || {
        certify_sufficient(&spec, &path, Some(&m), &tol)
    });
    if let Some(out) = &a.out {
        write_trajectory_csv(out, &trajectory_table(&spec, &path, Some(&m)))?;
    }
    println!(
        "  closed-form c0 = {c0_closed_form:.12}  shot c0 = {:.12}  rel err = {c0_rel_err:.3e}",
        res.c0
    );
    println!("  necessary conditions: {}", verdict_text(&necessary.verdict));
    println!(
        "  sufficiency: optimal = {}  unique = {}",
        certificate.optimal, certificate.unique
    );

    let pass = c0_rel_err <= EXAMPLE1_C0_TOL && necessary.verdict.is_consistent() && certificate.optimal;
    report.example1 = Some(Example1Summary {
        c0_closed_form,
        c0_solver: res.c0,
        c0_rel_err,
        c0_tol: EXAMPLE1_C0_TOL,
        tvc_proxy_at_t: res.tvc_proxy_at_t,
    });
    report.shooting = Some(res);
    report.necessary = Some(necessary);
    report.certificate = Some(certificate);
    Ok(pass)
}
