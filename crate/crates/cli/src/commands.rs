use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stablab::estimators::{pohozaev_identity, TestFunction};
use stablab::exprlang::{parse, Expr, Nonlinearity, Signature};
use stablab::geometry::{build_grid, Grid, ScalarField};
use stablab::operators::CoefficientSpec;
use stablab::solver::{solve_newton, trace_branch, Branch, Problem, Segment, Termination};

use crate::config::RunConfig;
use crate::report::write_csv;
use crate::{dump, verify, HarnessError, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Branch,
    Verify,
    Convergence,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: PathBuf,
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub timestamp: bool,
    pub bless: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub message: String,
}

/// Output directory and fixture path resolved against the config location.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
    pub fixtures: Option<PathBuf>,
}

impl Paths {
    pub fn resolve(cfg: &RunConfig, opts: &Options) -> Self {
        let base = opts.config.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self {
            out: opts.out.clone().unwrap_or_else(|| base.join(&cfg.output.dir)),
            fixtures: cfg.output.fixtures.as_ref().map(|f| base.join(f)),
        }
    }
}

pub fn execute(cmd: Command, opts: &Options) -> Result<Outcome, HarnessError> {
    let cfg = RunConfig::load(&opts.config)?;
    let paths = Paths::resolve(&cfg, opts);
    match cmd {
        Command::Solve => cmd_solve(&cfg, &paths, opts.timestamp),
        Command::Branch => cmd_branch(&cfg, &paths, opts.timestamp),
        Command::Verify => verify::cmd_verify(&cfg, &paths, opts.timestamp, opts.bless),
        Command::Convergence => cmd_convergence(&cfg, &paths, opts.timestamp),
    }
}

pub(crate) fn solver_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Solver(e.to_string())
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

/// Grid and problem at `lambda = 0` (or the configured fixed value).
pub(crate) fn setup(
    cfg: &RunConfig,
    h: f64,
    f: &Nonlinearity,
    spec: CoefficientSpec,
) -> Result<(Arc<Grid>, Problem), HarnessError> {
    let grid = build_grid(&cfg.problem.domain.spec(), h).map_err(config_err)?;
    let lambda = cfg.problem.lambda.unwrap_or(0.0);
    let mut p = Problem::new(&grid, spec, f.clone(), lambda).map_err(config_err)?;
    if let Some(src) = &cfg.problem.manufactured {
        p = p.with_manufactured(&coord_expr(cfg, src)?).map_err(config_err)?;
    }
    Ok((grid, p))
}

pub(crate) fn coord_expr(cfg: &RunConfig, src: &str) -> Result<Expr, HarnessError> {
    let sig = Signature::coords(cfg.problem.domain.coefficient_dim());
    parse(src, &sig).map_err(|e| HarnessError::Config(format!("expression {src:?}: {e}")))
}

/// A solution together with how it was obtained.
pub(crate) struct Solved {
    pub problem: Problem,
    pub u: ScalarField,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub branch: Option<Arc<Branch>>,
}

pub(crate) fn trace(p: &Problem, cfg: &RunConfig) -> Result<Branch, HarnessError> {
    let b = trace_branch(p, &cfg.problem.branch.policy());
    if b.termination == Termination::StartFailed || b.points.is_empty() {
        return Err(HarnessError::Solver("branch continuation could not start at lambda = 0".into()));
    }
    Ok(b)
}

/// Newton at `fraction * lambda*`, started from the nearest stable point below.
pub(crate) fn solve_on_branch(p: &Problem, branch: &Arc<Branch>, fraction: f64) -> Result<Solved, HarnessError> {
    let target = fraction * branch.lambda_star;
    let start = branch
        .stable()
        .filter(|q| q.lambda <= target)
        .last()
        .ok_or_else(|| HarnessError::Solver("empty stable branch".into()))?;
    let done = |u: ScalarField, lambda, iterations, residual, tolerance| Solved {
        problem: p.with_lambda(lambda).expect("nonnegative"),
        u,
        lambda,
        iterations,
        residual,
        tolerance,
        branch: Some(branch.clone()),
    };
    if start.lambda == target {
        return Ok(done(start.u.clone(), target, start.newton_iters, start.residual, f64::NAN));
    }
    let q = p.with_lambda(target).map_err(solver_err)?;
    let s = solve_newton(&q, Some(&start.u)).map_err(solver_err)?;
    Ok(done(s.u, target, s.iterations, s.residual, s.tolerance))
}

/// The configured solution: a sampled field, a point on the traced branch,
/// or a Newton solve at fixed `lambda`.
pub(crate) fn solve_configured(cfg: &RunConfig, p: &Problem) -> Result<Solved, HarnessError> {
    let pr = &cfg.problem;
    if let Some(src) = &pr.field {
        let e = coord_expr(cfg, src)?;
        let grid = p.grid();
        let err = std::cell::RefCell::new(None);
        let u = ScalarField::from_fn(grid, |x| {
            e.eval(x).unwrap_or_else(|ev| {
                err.borrow_mut().get_or_insert(ev);
                0.0
            })
        });
        if let Some(ev) = err.into_inner() {
            return Err(HarnessError::Config(format!("field {src:?}: {ev}")));
        }
        return Ok(Solved {
            problem: p.clone(),
            u,
            lambda: p.lambda(),
            iterations: 0,
            residual: 0.0,
            tolerance: 0.0,
            branch: None,
        });
    }
    if let Some(frac) = pr.lambda_fraction {
        let b = Arc::new(trace(p, cfg)?);
        return solve_on_branch(p, &b, frac);
    }
    let s = solve_newton(p, None).map_err(solver_err)?;
    Ok(Solved {
        problem: p.clone(),
        u: s.u,
        lambda: p.lambda(),
        iterations: s.iterations,
        residual: s.residual,
        tolerance: s.tolerance,
        branch: None,
    })
}

/// Largest nodal error against the manufactured solution.
pub(crate) fn max_error(cfg: &RunConfig, u: &ScalarField) -> Result<Option<f64>, HarnessError> {
    let Some(src) = &cfg.problem.manufactured else {
        return Ok(None);
    };
    let e = coord_expr(cfg, src)?;
    let grid = u.grid();
    let n = grid.axes();
    let mut worst: f64 = 0.0;
    for &i in grid.unknowns() {
        let x = grid.coords(i);
        let exact = e.eval(&x[..n]).map_err(config_err)?;
        worst = worst.max((u.get(i) - exact).abs());
    }
    Ok(Some(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub run_id: String,
    pub lambda: f64,
    pub h: f64,
    pub unknowns: usize,
    pub max_u: f64,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub max_error: Option<f64>,
}

pub fn cmd_solve(cfg: &RunConfig, paths: &Paths, timestamp: bool) -> Result<Outcome, HarnessError> {
    let f = cfg.problem.nonlinearity.build()?;
    let (grid, p) = setup(cfg, cfg.grid.h, &f, cfg.coefficients(0.0)?)?;
    let s = solve_configured(cfg, &p)?;
    let row = SolveSummary {
        run_id: cfg.run_id.clone(),
        lambda: s.lambda,
        h: grid.spacing(),
        unknowns: grid.unknown_count(),
        max_u: s.u.max(),
        iterations: s.iterations,
        residual: s.residual,
        tolerance: s.tolerance,
        max_error: max_error(cfg, &s.u)?,
    };
    let sol = paths.out.join(&cfg.output.solution);
    let summary = paths.out.join(&cfg.output.summary);
    dump::write(&sol, &s.u)?;
    write_csv(&summary, &[row.clone()], timestamp)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        files: vec![sol, summary],
        message: format!(
            "{}: lambda = {}, max u = {:.6e}, {} Newton iterations",
            cfg.run_id, row.lambda, row.max_u, row.iterations
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub run_id: String,
    pub index: usize,
    pub lambda: f64,
    pub max_u: f64,
    pub mu1: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Stable points go to `output.branch` (strictly increasing `lambda`);
/// points past the fold, when requested, to `<stem>_upper.csv`.
pub fn cmd_branch(cfg: &RunConfig, paths: &Paths, timestamp: bool) -> Result<Outcome, HarnessError> {
    let f = cfg.problem.nonlinearity.build()?;
    let (_, p) = setup(cfg, cfg.grid.h, &f, cfg.coefficients(0.0)?)?;
    let b = trace(&p, cfg)?;
    let rows = |seg: Segment| -> Vec<BranchRow> {
        b.points
            .iter()
            .filter(|q| q.segment == seg)
            .enumerate()
            .map(|(index, q)| BranchRow {
                run_id: cfg.run_id.clone(),
                index,
                lambda: q.lambda,
                max_u: q.u.max(),
                mu1: q.mu1,
                newton_iters: q.newton_iters,
                residual: q.residual,
            })
            .collect()
    };
    let stable = rows(Segment::Stable);
    debug_assert!(stable.windows(2).all(|w| w[1].lambda > w[0].lambda));
    let main = paths.out.join(&cfg.output.branch);
    write_csv(&main, &stable, timestamp)?;
    let mut files = vec![main.clone()];
    let upper = rows(Segment::Upper);
    if !upper.is_empty() {
        let stem = main.file_stem().and_then(|s| s.to_str()).unwrap_or("branch");
        let path = main.with_file_name(format!("{stem}_upper.csv"));
        write_csv(&path, &upper, timestamp)?;
        files.push(path);
    }
    let mut message = format!(
        "{}: {} stable points, last lambda = {:.6}, termination {:?}",
        cfg.run_id,
        stable.len(),
        b.lambda_star,
        b.termination
    );
    if let Some(fold) = b.fold_lambda {
        message.push_str(&format!(", fold at {fold:.6}"));
    }
    Ok(Outcome {
        exit_code: EXIT_OK,
        files,
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub run_id: String,
    pub quantity: String,
    pub level: usize,
    pub h: f64,
    pub value: f64,
    /// Error for error-type quantities, successive difference otherwise.
    pub error: Option<f64>,
    /// Observed order, or `exact` when errors are at round-off.
    pub order: String,
    /// `ok` or `non-monotone`.
    pub flag: String,
}

/// Errors below this (relative to the quantity's scale) count as round-off.
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    /// The value itself is an error that should go to zero.
    Error,
    /// A converging value; orders come from Richardson triplets.
    Value,
}

/// Order table for one quantity sampled at `h, h/2, h/4, ...`.
pub fn order_table(run_id: &str, name: &str, kind: QuantityKind, hs: &[f64], values: &[f64], scale: f64) -> Vec<ConvergenceRow> {
    let floor = EXACT_TOL * scale.abs().max(1.0);
    let errors: Vec<Option<f64>> = match kind {
        QuantityKind::Error => values.iter().map(|v| Some(v.abs())).collect(),
        QuantityKind::Value => (0..values.len())
            .map(|k| (k > 0).then(|| (values[k] - values[k - 1]).abs()))
            .collect(),
    };
    let mut rows = Vec::with_capacity(values.len());
    for k in 0..values.len() {
        let (order, flag) = match (k.checked_sub(1).and_then(|j| errors[j]), errors[k]) {
            (Some(prev), Some(cur)) => {
                if cur <= floor {
                    ("exact".to_string(), "ok")
                } else {
                    let ratio = hs[k - 1] / hs[k];
                    let p = (prev / cur).ln() / ratio.ln();
                    (format!("{p:.4}"), if cur < prev { "ok" } else { "non-monotone" })
                }
            }
            _ => (String::new(), "ok"),
        };
        rows.push(ConvergenceRow {
            run_id: run_id.to_string(),
            quantity: name.to_string(),
            level: k,
            h: hs[k],
            value: values[k],
            error: errors[k],
            order,
            flag: flag.to_string(),
        });
    }
    rows
}

pub fn cmd_convergence(cfg: &RunConfig, paths: &Paths, timestamp: bool) -> Result<Outcome, HarnessError> {
    let levels = cfg.grid.refinements;
    if levels < 3 {
        return Err(HarnessError::Config(format!("convergence needs at least 3 refinements, got {levels}")));
    }
    if cfg.problem.lambda_fraction.is_some() {
        return Err(HarnessError::Config("convergence needs a fixed lambda".into()));
    }
    let f = cfg.problem.nonlinearity.build()?;
    let hs: Vec<f64> = (0..levels).map(|k| cfg.grid.h / f64::powi(2.0, k as i32)).collect();
    let pohozaev = cfg.problem.domain.is_half_ball() && cfg.checks().contains(&"pohozaev");
    let mut err = Vec::new();
    let mut max_u = Vec::new();
    let mut poh = Vec::new();
    let mut poh_scale: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &h in &hs {
        let (grid, p) = setup(cfg, h, &f, cfg.coefficients(0.0)?)?;
        let s = solve_configured(cfg, &p)?;
        if let Some(e) = max_error(cfg, &s.u)? {
            err.push(e);
        }
        scale = scale.max(s.u.max_abs());
        max_u.push(s.u.max());
        if pohozaev {
            let eta = TestFunction::bump(&grid, &vec![0.0; grid.dim()], verify::POHOZAEV_RADIUS);
            let r = pohozaev_identity(&s.u, p.spec(), &eta).map_err(solver_err)?;
            poh_scale = poh_scale.max(r.lhs.abs().max(r.rhs.abs()));
            poh.push(r.residual);
        }
    }
    let mut rows = Vec::new();
    if !err.is_empty() {
        rows.extend(order_table(&cfg.run_id, "max_error", QuantityKind::Error, &hs, &err, scale));
    } else if cfg.problem.field.is_none() {
        rows.extend(order_table(&cfg.run_id, "max_u", QuantityKind::Value, &hs, &max_u, scale));
    }
    if pohozaev {
        rows.extend(order_table(&cfg.run_id, "pohozaev_residual", QuantityKind::Error, &hs, &poh, poh_scale));
    }
    let path = paths.out.join(&cfg.output.convergence);
    write_csv(&path, &rows, timestamp)?;
    let mut message = String::new();
    for r in &rows {
        message.push_str(&format!(
            "{:<18} h = {:<10.3e} value = {:<14.6e} order = {:<8} {}\n",
            r.quantity, r.h, r.value, r.order, r.flag
        ));
    }
    Ok(Outcome {
        exit_code: EXIT_OK,
        files: vec![path],
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_errors() {
        let hs = [0.1, 0.05, 0.025];
        let rows = order_table("r", "e", QuantityKind::Error, &hs, &[1e-2, 2.5e-3, 6.25e-4], 1.0);
        assert_eq!(rows[0].order, "");
        assert_eq!(rows[1].order, "2.0000");
        assert_eq!(rows[2].order, "2.0000");
        assert!(rows.iter().all(|r| r.flag == "ok"));
    }

    #[test]
    fn round_off_is_exact_and_growth_is_flagged() {
        let hs = [0.1, 0.05, 0.025];
        let rows = order_table("r", "e", QuantityKind::Error, &hs, &[1e-15, 3e-15, 2e-15], 1.0);
        assert!(rows[1..].iter().all(|r| r.order == "exact"));
        let rows = order_table("r", "e", QuantityKind::Error, &hs, &[1e-3, 2e-3, 1e-3], 1.0);
        assert_eq!(rows[1].flag, "non-monotone");
        assert_eq!(rows[2].flag, "ok");
    }

    #[test]
    fn richardson_from_values() {
        let hs = [0.1, 0.05, 0.025];
        // q(h) = 1 + h^2
        let v: Vec<f64> = hs.iter().map(|h| 1.0 + h * h).collect();
        let rows = order_table("r", "q", QuantityKind::Value, &hs, &v, 1.0);
        assert_eq!(rows[1].order, "");
        assert_eq!(rows[2].order, "2.0000");
    }
}
