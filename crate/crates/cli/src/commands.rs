//! One function per subcommand. Each returns the process exit code.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use vdmfg::closed_form::{example_bbb, example_exlp, exlp_catalog, is_admissible, ExampleKind};
use vdmfg::corrector::{solve_limit_corrector, verify_expansion, CorrectorOptions, ErgodicTriple};
use vdmfg::corrector::{extrapolate_ergodic, solve_ergodic};
use vdmfg::discounted::{
    assemble_jacobian, continuation_report, continuation_solve, density_formula_residual, energy_identity_residual,
    jacobian_fd_mismatch, ContinuationReport,
};
use vdmfg::selection::{
    discounted_action, holonomy_defect_discounted, run_selection_experiment, select_minimizer, trig_basis,
    LadderSchedule, HOLONOMY_MODES,
};
use vdmfg::{integrate, DiscountedSolution, GridField, Regularization, SolverOptions, TorusGrid};

use crate::config::{ladder, positive, resolve, ExampleArg, GridArgs, PhysicsArgs, Resolved, SelectModel};
use crate::output::{columns, dir_of, jnum, num, sidecar, write_json, write_meta, Table};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;

fn solver_opts(r: &Resolved) -> SolverOptions<f64> {
    SolverOptions {
        tol: r.tol,
        ..SolverOptions::default()
    }
}

fn config_json(r: &Resolved, extra: Value) -> Value {
    let mut v = serde_json::to_value(r).expect("config serializes");
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

/// A continuation run that may have stopped early.
fn run_rung(grid: &TorusGrid, eps: f64, r: &Resolved, reg: &Regularization) -> Result<ContinuationReport<f64>, CliError> {
    let model = r.model()?;
    Ok(continuation_report(grid, eps, &model, reg, &solver_opts(r))?)
}

fn solution_json(sol: &DiscountedSolution, failure: Option<&vdmfg::Error>) -> Value {
    let (lo, hi) = sol.eps_u_range();
    json!({
        "epsilon": sol.epsilon,
        "residual_sup": jnum(sol.residual_sup),
        "iters": sol.newton_iters,
        "mass": jnum(sol.mass()),
        "min_m": jnum(sol.min_m()),
        "eps_u_min": jnum(lo),
        "eps_u_max": jnum(hi),
        "continuation_steps": sol.continuation_steps,
        "lambda_cont": sol.lambda_cont,
        "sigma": sol.regularization.sigma,
        "delta": sol.regularization.delta,
        "failed": failure.is_some(),
        "error": failure.map(|e| e.to_string()),
    })
}

fn status(failed: bool) -> String {
    if failed { "failed" } else { "ok" }.to_string()
}

pub fn solve(epsilon: f64, grid: &GridArgs, physics: &PhysicsArgs, out: &Path) -> Result<i32, CliError> {
    let eps = positive("epsilon", epsilon)?;
    let r = resolve(grid, Some(physics))?;
    let reg = r.regularization()?;
    write_meta(&dir_of(out), "solve", config_json(&r, json!({"epsilon": eps, "out": out})))?;
    let g = TorusGrid::line(r.n);
    let rep = run_rung(&g, eps, &r, &reg)?;
    let sol = &rep.last;
    columns(&["x", "u", "m"], &[&g.nodes(), sol.u.values(), sol.m.values()]).write(out)?;
    write_json(&sidecar(out), &solution_json(sol, rep.failure.as_ref()))?;
    Ok(match rep.failure {
        Some(e) => {
            eprintln!("solve failed: {e}; last accepted iterate written");
            EXIT_FAILED
        }
        None => EXIT_OK,
    })
}

pub fn sweep(list: &[f64], tied: bool, grid: &GridArgs, physics: &PhysicsArgs, out: &Path) -> Result<i32, CliError> {
    let eps_list = ladder(list)?;
    let r = resolve(grid, Some(physics))?;
    let fixed = r.regularization()?;
    let model = r.model()?;
    write_meta(out, "sweep", config_json(&r, json!({"epsilon_list": eps_list, "tied": tied})))?;
    let g = TorusGrid::line(r.n);
    let mut table = Table::new(&[
        "eps", "sigma", "delta", "Hbar_est", "mean_u", "mass", "min_m", "residual_sup", "newton_iters", "continuation_steps", "status",
    ]);
    let mut solved = Vec::new();
    let mut failed = false;
    for (k, &eps) in eps_list.iter().enumerate() {
        let reg = if tied { Regularization::tied(eps) } else { fixed };
        let rep = run_rung(&g, eps, &r, &reg)?;
        let s = &rep.last;
        failed |= rep.failure.is_some();
        table.push(vec![
            num(eps),
            num(reg.sigma),
            num(reg.delta),
            num(s.hbar_estimate()),
            num(integrate(&s.u)),
            num(s.mass()),
            num(s.min_m()),
            num(s.residual_sup),
            s.newton_iters.to_string(),
            s.continuation_steps.to_string(),
            status(rep.failure.is_some()),
        ]);
        columns(&["x", "u", "m"], &[&g.nodes(), s.u.values(), s.m.values()]).write(&out.join(format!("rung_{k}.csv")))?;
        if let Some(e) = &rep.failure {
            eprintln!("rung eps={eps} failed: {e}");
        } else {
            solved.push(rep.last);
        }
    }
    table.write(&out.join("sweep.csv"))?;

    let extrapolated = if solved.len() >= 2 { extrapolate_ergodic(&solved).ok().map(|b| b.hbar) } else { None };
    let base = if !model.satisfies_osc(&g) && fixed.is_none() {
        json!({"skipped": "potential oscillation too large for a classical ergodic solve"})
    } else {
        match solve_ergodic(&g, &model, &fixed, &solver_opts(&r)) {
            Ok(b) => {
                columns(&["x", "u", "m"], &[&g.nodes(), b.u.values(), b.m.values()]).write(&out.join("base.csv"))?;
                let v = json!({"hbar": b.hbar, "hbar_extrapolated": extrapolated.map(jnum), "n": r.n, "failed": false});
                write_json(&out.join("base.json"), &v)?;
                v
            }
            Err(e) => {
                failed = true;
                eprintln!("ergodic base failed: {e}");
                json!({"failed": true, "error": e.to_string()})
            }
        }
    };
    let hbars: Vec<f64> = solved.iter().map(|s| s.hbar_estimate()).collect();
    let cauchy: Vec<f64> = hbars.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    write_json(
        &out.join("sweep.json"),
        &json!({"hbar_cauchy_differences": cauchy, "base": base, "failed": failed}),
    )?;
    Ok(if failed { EXIT_FAILED } else { EXIT_OK })
}

/// Reads `x,u,m` rows written by `sweep` (or by hand).
fn read_base(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read base {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Usage(format!("base CSV lacks column '{name}'")))
    };
    let (iu, im) = (col("u")?, col("m")?);
    let (mut u, mut m) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64, CliError> {
            cells
                .get(i)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| CliError::Usage(format!("bad number in base CSV row {}", k + 2)))
        };
        u.push(parse(iu)?);
        m.push(parse(im)?);
    }
    Ok((u, m))
}

fn read_hbar(path: &Path) -> Result<f64, CliError> {
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", side.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad JSON in {}: {e}", side.display())))?;
    v.get("hbar")
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Usage(format!("{} has no numeric 'hbar'", side.display())))
}

pub fn corrector(base: &Path, list: &[f64], grid: &GridArgs, physics: &PhysicsArgs, out: &Path) -> Result<i32, CliError> {
    let eps_list = ladder(list)?;
    let mut r = resolve(grid, Some(physics))?;
    let (u, m) = read_base(base)?;
    if grid.n.is_some_and(|n| n != u.len()) {
        return Err(CliError::Usage(format!("--n disagrees with the base grid ({} nodes)", u.len())));
    }
    r.n = u.len();
    let hbar = read_hbar(base)?;
    let model = r.model()?;
    let reg = r.regularization()?;
    write_meta(&dir_of(out), "corrector", config_json(&r, json!({"base": base, "epsilon_list": eps_list})))?;
    let g = TorusGrid::line(r.n);
    let triple = ErgodicTriple::new(GridField::new(g, u)?, GridField::new(g, m)?, hbar)?;
    let corr = solve_limit_corrector(&triple, &model, &CorrectorOptions::default())?;
    columns(&["x", "v", "theta"], &[&g.nodes(), corr.v.values(), corr.theta.values()]).write(out)?;

    let mut sweep = Vec::new();
    let mut failure = None;
    for &eps in &eps_list {
        match continuation_solve(&g, eps, &model, &reg, &solver_opts(&r)) {
            Ok(s) => sweep.push(s),
            Err(e) => {
                eprintln!("expansion rung eps={eps} failed: {e}");
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let routes = corr.routes.map(|a| {
        json!({
            "lambda_direct": a.lambda_direct,
            "lambda_extrapolated": a.lambda_extrapolated,
            "lambda_gap": a.lambda_gap(),
            "v_sup": a.v_sup,
            "theta_sup": a.theta_sup,
        })
    });
    let (slopes, rows) = if failure.is_none() {
        let t = verify_expansion(&sweep, &triple, &corr)?;
        let rows: Vec<Value> = t.rows.iter().map(|r| json!({"eps": r.eps, "e_u": r.e_u, "e_m": r.e_m, "e_2": r.e_2})).collect();
        (json!({"e_u": jnum(t.slope_u), "e_m": jnum(t.slope_m), "e_2": jnum(t.slope_2)}), Value::Array(rows))
    } else {
        (Value::Null, Value::Array(vec![]))
    };
    write_json(
        &sidecar(out),
        &json!({
            "lambda": corr.lambda,
            "mean_shift": corr.mean_shift,
            "hbar": hbar,
            "route_agreement": routes,
            "slopes": slopes,
            "expansion": rows,
            "failed": failure.is_some(),
            "error": failure,
        }),
    )?;
    Ok(if failure.is_some() { EXIT_FAILED } else { EXIT_OK })
}

/// Tolerance for the closed-form admissibility report.
const ADMISSIBLE_TOL: f64 = 1e-9;

pub fn example(kind: ExampleArg, grid: &GridArgs, out: &Path) -> Result<i32, CliError> {
    let r = resolve(grid, None)?;
    let kind = kind.kind();
    write_meta(out, "example", config_json(&r, json!({"example": kind.name()})))?;
    let g = TorusGrid::line(r.n);
    let (ex, candidates) = match kind {
        ExampleKind::Bbb => {
            let ex = example_bbb(&g)?;
            let c = ex.candidates.clone();
            (ex, c)
        }
        ExampleKind::Exlp => (example_exlp(&g)?, exlp_catalog(&g)?),
    };
    let x = g.nodes();
    columns(&["x", "m"], &[&x, ex.m.values()]).write(&out.join("m.csv"))?;
    let model = kind.model::<f64>();
    let mut summary = Vec::new();
    for c in &candidates {
        columns(&["x", "u_x", "u"], &[&x, c.u_x.values(), c.u.values()]).write(&out.join(format!("candidate_{}.csv", c.label)))?;
        let adm = is_admissible(&c.u_x, kind, ADMISSIBLE_TOL);
        summary.push(json!({
            "label": c.label,
            "F": vdmfg::selection::selection_functional(&c.u, &ex.m)?,
            "max_u": c.u.max(),
            "admissible": adm.admissible,
            "hj_defect_on_support": c.hj_defect_on_support(&model, ADMISSIBLE_TOL),
            "transport_defect": c.transport_defect(),
        }));
    }
    let ranking = select_minimizer(&candidates, &ex.m, 1e-12)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "example": kind.name(),
            "hbar": ex.hbar,
            "candidates": summary,
            "minimizer": ranking.winner(),
        }),
    )?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
pub fn select(
    which: SelectModel,
    eps_ladder: &[f64],
    sigma_per_eps: f64,
    delta_per_eps: f64,
    selection_tol: f64,
    grid: &GridArgs,
    out: &Path,
) -> Result<i32, CliError> {
    let eps_list = ladder(eps_ladder)?;
    for (k, v) in [("sigma-per-eps", sigma_per_eps), ("delta-per-eps", delta_per_eps)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!("{k} must be >= 0, got {v}")));
        }
    }
    let tol = positive("selection-tol", selection_tol)?;
    let r = resolve(grid, None)?;
    let name = match which {
        SelectModel::Exdp => "exdp",
        SelectModel::Bbb => "bbb",
    };
    write_meta(
        out,
        "select",
        json!({
            "n": r.n,
            "tol": r.tol,
            "model": name,
            "eps_ladder": eps_list,
            "sigma_per_eps": sigma_per_eps,
            "delta_per_eps": delta_per_eps,
            "selection_tol": tol,
            "overrides": r.overrides,
        }),
    )?;
    let g = TorusGrid::line(r.n);
    let (kind, catalog, m_ref) = match which {
        SelectModel::Exdp => {
            let cat = exlp_catalog(&g)?;
            let m = cat[0].m.clone();
            (ExampleKind::Exlp, cat, m)
        }
        SelectModel::Bbb => {
            let ex = example_bbb(&g)?;
            (ExampleKind::Bbb, ex.candidates, ex.m)
        }
    };
    let schedule = LadderSchedule { sigma_per_eps, delta_per_eps };
    let (sw, v) = run_selection_experiment(&kind.model(), &g, &eps_list, &catalog, &m_ref, schedule, tol, &solver_opts(&r))?;
    let mut table = Table::new(&[
        "eps", "sigma", "delta", "Hbar_est", "F_value", "mass", "min_m", "holonomy_max", "action_gap", "coupling_gap", "status",
    ]);
    for row in &sw.rows {
        table.push(vec![
            num(row.eps),
            num(row.sigma),
            num(row.delta),
            num(row.hbar_est),
            num(row.f_value),
            num(row.mass),
            num(row.min_m),
            num(row.holonomy_max),
            num(row.action_gap),
            num(row.coupling_gap),
            status(row.failed.is_some()),
        ]);
        if let Some(e) = &row.failed {
            eprintln!("rung eps={} failed: {e}", row.eps);
        }
    }
    table.write(&out.join("sweep.csv"))?;
    let oracle = select_minimizer(&catalog, &m_ref, 1e-12)?;
    let pairs = |xs: &[(String, f64)]| Value::Object(xs.iter().map(|(k, x)| (k.clone(), jnum(*x))).collect());
    write_json(
        &out.join("verdict.json"),
        &json!({
            "model": name,
            "terminal_eps": v.terminal_eps,
            "hbar_terminal": jnum(v.hbar_terminal),
            "F_terminal": jnum(v.f_terminal),
            "F_candidates": pairs(&v.f_candidates),
            "l2_distances": pairs(&v.distances),
            "nearest": v.nearest,
            "criterion_holds": v.criterion_holds,
            "tol": v.tol,
            "degenerate": v.degenerate,
            "successive_differences": v.successive_differences.iter().map(|x| jnum(*x)).collect::<Vec<_>>(),
            "oracle_minimizer": oracle.winner(),
            "failed_rows": sw.rows.iter().filter(|r| r.failed.is_some()).map(|r| r.eps).collect::<Vec<_>>(),
        }),
    )?;
    Ok(if sw.any_failed() { EXIT_FAILED } else { EXIT_OK })
}

/// Grid of the finite-difference Jacobian check (dense, `O(n²)` residuals).
const FD_GRID: usize = 32;

struct Check {
    name: &'static str,
    value: f64,
    bound: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value <= self.bound
    }
}

pub fn verify(epsilon: f64, grid: &GridArgs, physics: &PhysicsArgs, out: Option<&Path>) -> Result<i32, CliError> {
    let eps = positive("epsilon", epsilon)?;
    let r = resolve(grid, Some(physics))?;
    let model = r.model()?;
    let reg = r.regularization()?;
    if let Some(dir) = out {
        write_meta(dir, "verify", config_json(&r, json!({"epsilon": eps})))?;
    }
    let g = TorusGrid::line(r.n);
    let h = g.h();
    let mut checks = Vec::new();
    let rep = run_rung(&g, eps, &r, &reg)?;
    let sol = &rep.last;
    checks.push(Check {
        name: "converged",
        value: if rep.failure.is_some() { 1.0 } else { 0.0 },
        bound: 0.0,
    });
    checks.push(Check {
        name: "mass |∫m - 1|",
        value: (sol.mass() - 1.0).abs(),
        bound: 1e-8,
    });
    checks.push(Check {
        name: "energy identity",
        value: energy_identity_residual(sol, &model),
        bound: 5.0 * h * h,
    });
    checks.push(Check {
        name: "density formula",
        value: density_formula_residual(sol, &model),
        bound: 5.0 * h * h,
    });
    let worst = trig_basis(&g, HOLONOMY_MODES)
        .iter()
        .map(|(phi, c2)| holonomy_defect_discounted(eps, sol, phi).map(|d| d / (h * h * c2)))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "holonomy / (h² ‖φ‖_C²)",
        value: worst,
        bound: 10.0,
    });
    checks.push(Check {
        name: "action gap",
        value: discounted_action(eps, sol, &model).gap,
        bound: 10.0 * h * h,
    });
    let coarse = TorusGrid::line(FD_GRID);
    let fd = match continuation_solve(&coarse, eps, &model, &reg, &solver_opts(&r)) {
        Ok(c) => {
            let err = jacobian_fd_mismatch(&c.u, eps, 1.0, &model, &reg, 1e-7)?;
            let j = assemble_jacobian(&c.u, eps, 1.0, &model, &reg)?;
            let scale = (0..FD_GRID).map(|i| j.matrix().get(i, 0).abs()).fold(0.0, f64::max);
            err / scale
        }
        Err(_) => f64::INFINITY,
    };
    checks.push(Check {
        name: "Jacobian FD (relative)",
        value: fd,
        bound: 1e-6,
    });

    println!("{:<26} {:>12} {:>12}  status", "check", "value", "bound");
    for c in &checks {
        println!(
            "{:<26} {:>12.3e} {:>12.3e}  {}",
            c.name,
            c.value,
            c.bound,
            if c.pass() { "PASS" } else { "FAIL" }
        );
    }
    let all = checks.iter().all(Check::pass);
    if let Some(dir) = out {
        let rows: Vec<Value> = checks
            .iter()
            .map(|c| json!({"check": c.name, "value": jnum(c.value), "bound": c.bound, "pass": c.pass()}))
            .collect();
        write_json(&dir.join("verify.json"), &json!({"checks": rows, "all_pass": all}))?;
    }
    Ok(if all { EXIT_OK } else { EXIT_FAILED })
}
