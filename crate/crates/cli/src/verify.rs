use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use stablab::estimators::{
    c_delta, curvature_a, interpolation_props, lemma21_checks, lemma31_l2l1, levelset_step1, pohozaev_identity,
    simon_absorption, stability_gap, stability_gap_boundary, thm11_energy, thm11_gamma_default, thm12_suite,
    thm12_szz, EstimateError, GradientEnergy, ReportEntry, SimonOptions, SimonOutcome, TestFunction,
};
use stablab::estimators::BallFunctional;
use stablab::exprlang::Nonlinearity;
use stablab::geometry::{build_grid, gradient_hessian, DomainSpec, Grid, ScalarField};
use stablab::solver::{principal_eigenvalue, Segment};

use crate::commands::{setup, solve_configured, solve_on_branch, solver_err, trace, Outcome, Paths, Solved};
use crate::config::{DomainConfig, FamilyConfig, NonlinearityConfig, RunConfig};
use crate::fixtures::Fixtures;
use crate::report::{sort_rows, write_csv, ReportRow};
use crate::{HarnessError, EXIT_OK, EXIT_VERIFY};

/// Radius of the bump used against the Pohozaev identity.
pub const POHOZAEV_RADIUS: f64 = 0.7;

/// Estimate rows without an absolute pass criterion: their ratios are
/// frozen as regression references and compared across a family.
pub const REGRESSION_CHECKS: [&str; 10] = [
    "lemma21.hess",
    "lemma21.hessgrad",
    "lemma31.l2l1",
    "thm11.energy",
    "thm11.levelset",
    "thm12.hessgrad",
    "thm12.hessian",
    "thm12.pohozaev",
    "thm12.szkinda",
    "thm12.szz",
];

/// Row names (and anchors) a check produces; used for failure rows.
fn rows_of(check: &str) -> &'static [(&'static str, &'static str)] {
    match check {
        "stability" => &[("stability.interior", "ineq:stable")],
        "stability_boundary" => &[("stability.boundary", "stab:half:jac")],
        "thm12" => &[
            ("thm12.pohozaev", "ineq:pohozaev"),
            ("thm12.hessgrad", "ineq:hessgrad"),
            ("thm12.szkinda", "ineq:szkinda"),
            ("thm12.hessian", "ineq:hessian"),
        ],
        "szz" => &[("thm12.szz", "eq:szz")],
        "lemma21" => &[("lemma21.hess", "hess:test"), ("lemma21.hessgrad", "hessgrad:test")],
        "pohozaev" => &[("pohozaev.identity", "pohozaev:1")],
        "thm11" => &[("thm11.energy", "thm:holder")],
        "lemma31" => &[("lemma31.l2l1", "lemma:l2l1")],
        "levelset" => &[("thm11.levelset", "thm:holder")],
        "curvature" => &[("curvature.equivalence", "def:anew")],
        "interpolation" => &[("propA1.interp", "interpol"), ("propA2.nash", "nash")],
        "simon" => &[("simon.absorption", "lemma:simon")],
        _ => &[],
    }
}

fn failed(check: &str, reason: &str) -> Vec<ReportEntry> {
    rows_of(check)
        .iter()
        .map(|(name, anchor)| ReportEntry::new(name, anchor, 0.0, 0.0, 1.0).fail(reason))
        .collect()
}

/// Worst ratio wins; ties keep the first.
fn worst(entries: impl IntoIterator<Item = ReportEntry>) -> Option<ReportEntry> {
    entries.into_iter().fold(None, |acc: Option<ReportEntry>, e| match acc {
        Some(a) if !(e.ratio > a.ratio) => Some(a),
        _ => Some(e),
    })
}

fn anchor_point(domain: &DomainSpec) -> Vec<f64> {
    match domain {
        DomainSpec::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        d => vec![0.0; d.dim()],
    }
}

/// Bumps used as `xi` in the interior stability inequality.
pub fn stability_family(grid: &Arc<Grid>) -> Vec<TestFunction> {
    match grid.domain() {
        DomainSpec::HalfBall { .. } => TestFunction::bump_family(grid),
        d => {
            let n = d.dim();
            let (center, half) = match d {
                DomainSpec::Box { lo, hi } => (
                    anchor_point(d),
                    lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min),
                ),
                DomainSpec::Ball { radius, .. } => (vec![0.0; n], *radius),
                _ => (vec![0.0; n], 1.0),
            };
            let mut out = Vec::new();
            for shift in [0.0, -0.3, 0.3] {
                let mut c = center.clone();
                c[0] += shift * half;
                let reach = half * (1.0 - shift.abs());
                for s in [0.4, 0.65, 0.9] {
                    out.push(TestFunction::bump(grid, &c, s * reach));
                }
            }
            out
        }
    }
}

/// Solutions entering the interior stability check: stable branch points
/// when a branch was traced, else the solution itself if `mu1 >= 0`.
fn stable_points(s: &Solved) -> Result<Vec<(f64, ScalarField)>, HarnessError> {
    if let Some(b) = &s.branch {
        return Ok(b
            .points
            .iter()
            .filter(|q| q.segment == Segment::Stable && q.mu1 >= 0.0)
            .map(|q| (q.lambda, q.u.clone()))
            .collect());
    }
    let j = s.problem.jacobian(&s.u).map_err(solver_err)?;
    let e = principal_eigenvalue(&j, &s.problem.tol).map_err(solver_err)?;
    Ok(if e.mu >= 0.0 { vec![(s.lambda, s.u.clone())] } else { Vec::new() })
}

/// `lhs <= rhs (1 + C h)` for every stable point and every test function.
fn stability_row(cfg: &RunConfig, s: &Solved) -> Result<ReportEntry, HarnessError> {
    let grid = s.problem.grid();
    let h = grid.spacing();
    let slack = 1.0 + cfg.estimators.stability_slack * h;
    let points = stable_points(s)?;
    let family = stability_family(grid);
    let spec = s.problem.spec();
    let f = s.problem.nonlinearity();
    let gaps: Vec<Result<Vec<(f64, String, f64, f64)>, EstimateError>> = points
        .par_iter()
        .map(|(lambda, u)| {
            family
                .iter()
                .map(|xi| stability_gap(u, spec, f, *lambda, xi).map(|(l, r)| (*lambda, xi.name().to_string(), l, r)))
                .collect()
        })
        .collect();
    let (name, anchor) = rows_of("stability")[0];
    let mut best: Option<ReportEntry> = None;
    let mut violations = 0usize;
    let mut pairs = 0usize;
    for g in gaps {
        let g = match g {
            Ok(g) => g,
            Err(e) => return Ok(ReportEntry::new(name, anchor, 0.0, 0.0, 1.0).fail(&e.to_string())),
        };
        for (lambda, xi, l, r) in g {
            pairs += 1;
            if l > r * slack {
                violations += 1;
            }
            let e = ReportEntry::new(name, anchor, l, r, l.abs().max(r))
                .param("lambda", lambda)
                .param("xi", xi);
            best = worst(best.into_iter().chain([e]));
        }
    }
    let e = best.unwrap_or_else(|| ReportEntry::new(name, anchor, 0.0, 0.0, 1.0));
    Ok(e.param("points", points.len())
        .param("pairs", pairs)
        .param("violations", violations)
        .with_threshold(slack))
}

fn gamma(cfg: &RunConfig, n: usize) -> f64 {
    cfg.estimators.gamma.unwrap_or_else(|| thm11_gamma_default(n))
}

/// Functions the interpolation inequalities are tested on.
pub const INTERPOLATION_SET: [&str; 5] = ["sin_product", "one", "zero", "bubble", "exp_sum"];

fn interpolation_field(grid: &Arc<Grid>, name: &str) -> ScalarField {
    use std::f64::consts::PI;
    match name {
        "sin_product" => ScalarField::from_fn(grid, |x| x.iter().map(|v| (PI * v).sin()).product()),
        "one" => ScalarField::from_fn(grid, |_| 1.0),
        "zero" => ScalarField::zeros(grid),
        "bubble" => ScalarField::from_fn(grid, |x| x.iter().map(|v| v * (1.0 - v)).product()),
        "exp_sum" => ScalarField::from_fn(grid, |x| x.iter().sum::<f64>().exp()),
        _ => unreachable!("unknown interpolation function"),
    }
}

fn interpolation_rows(cfg: &RunConfig, n: usize, h: f64) -> Result<Vec<ReportEntry>, EstimateError> {
    let grid = build_grid(&DomainSpec::cube(n, 0.0, 1.0), h)?;
    let mut a1 = Vec::new();
    let mut a2 = Vec::new();
    for name in INTERPOLATION_SET {
        let rep = interpolation_props(&interpolation_field(&grid, name), cfg.estimators.c_test)?;
        let mut it = rep.entries.into_iter().map(|e| e.param("function", name));
        a1.extend(it.next());
        a2.extend(it.next());
    }
    Ok(worst(a1).into_iter().chain(worst(a2)).collect())
}

/// Every enabled check except the interior stability one.
fn solution_checks(cfg: &RunConfig, s: &Solved) -> Vec<ReportEntry> {
    let u = &s.u;
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let spec = s.problem.spec();
    let eps = spec.eps.value().unwrap_or(0.0);
    let est = &cfg.estimators;
    let mut f: Nonlinearity = s.problem.nonlinearity().clone();
    if !f.flags.nondecreasing.holds() {
        let (lo, hi) = (u.min(), u.max());
        f.check_flags(lo, hi.max(lo + 1.0), s.lambda);
    }
    let gmax = gradient_hessian(u).0.norm().max_abs();
    let cutoff = || TestFunction::cutoff(grid, est.cutoff[0], est.cutoff[1]);

    let run = |check: &str| -> Result<Vec<ReportEntry>, EstimateError> {
        Ok(match check {
            "stability_boundary" => {
                let (name, anchor) = rows_of(check)[0];
                let slack = 1.0 + est.stability_slack * h;
                if gmax == 0.0 {
                    return Ok(vec![ReportEntry::new(name, anchor, 0.0, 0.0, 1.0).with_threshold(slack)]);
                }
                let eta = cutoff();
                let mut all = Vec::new();
                for &d in &est.delta_sweep {
                    let c = c_delta(u, spec, d * gmax)?;
                    let (l, r) = stability_gap_boundary(u, spec, &f, s.lambda, &c, &eta)?;
                    all.push(ReportEntry::new(name, anchor, l, r, l.abs().max(r)).param("delta_rel", d));
                }
                vec![worst(all).expect("non-empty sweep").with_threshold(slack)]
            }
            "thm12" => thm12_suite(u, spec, f.flags.nondecreasing.holds(), eps, est.eps0)?.entries,
            "szz" => {
                let mut all = Vec::new();
                for eta in TestFunction::bump_family(grid) {
                    let (e, t) = thm12_szz(u, spec, &eta, eps)?;
                    all.push(e.param("eta", eta.name()).param("t1", t.t1).param("t2", t.t2).param("t3", t.t3));
                }
                worst(all).into_iter().collect()
            }
            "lemma21" => lemma21_checks(u, spec, &cutoff(), eps)?.entries,
            "pohozaev" => {
                let (name, anchor) = rows_of(check)[0];
                let eta = TestFunction::bump(grid, &vec![0.0; n], POHOZAEV_RADIUS);
                let r = pohozaev_identity(u, spec, &eta)?;
                let scale = r.lhs.abs().max(r.rhs.abs());
                let tol = est.pohozaev_slack * h * scale;
                let e = ReportEntry::new(name, anchor, r.lhs, r.rhs, scale)
                    .param("residual", r.residual)
                    .param("tolerance", tol);
                vec![if r.residual <= tol { e } else { e.fail("identity residual above tolerance") }]
            }
            "thm11" => vec![thm11_energy(u, gamma(cfg, n))?],
            "lemma31" => vec![lemma31_l2l1(u, eps)?],
            "levelset" => {
                let (name, anchor) = rows_of(check)[0];
                if gmax == 0.0 {
                    return Ok(vec![ReportEntry::new(name, anchor, 0.0, 0.0, 1.0).param("skipped", est.levels)]);
                }
                let r = levelset_step1(u, est.levels)?;
                vec![r.entry.param("levels", r.levels.len()).param("skipped", r.skipped)]
            }
            "curvature" => {
                let (name, anchor) = rows_of(check)[0];
                let c = curvature_a(u, spec, &anchor_point(grid.domain()), 1e-8 * gmax)?;
                vec![ReportEntry::new(name, anchor, c.max_rel_diff, 1e-8, 1.0)
                    .param("comparability", c.comparability)
                    .with_threshold(1.0)]
            }
            "interpolation" => interpolation_rows(cfg, n, h)?,
            "simon" => {
                let (name, anchor) = rows_of(check)[0];
                let sigma = GradientEnergy::of(u);
                let c0 = sigma.eval(&vec![0.0; n], 1.0).max(f64::MIN_POSITIVE);
                let opts = SimonOptions {
                    seed: cfg.seed,
                    ..SimonOptions::default()
                };
                match simon_absorption(&sigma, est.simon_beta, c0, est.simon_delta, &opts)? {
                    SimonOutcome::Certificate(c) => {
                        let e = ReportEntry::new(name, anchor, c.sigma_half, c.c * c.c0, c.sigma_half.max(c.c * c.c0))
                            .param("c", c.c)
                            .param("kind", format!("{:?}", c.kind).split_whitespace().next().unwrap_or(""))
                            .param("samples", c.samples);
                        vec![if c.bound_holds { e } else { e.fail("absorbed bound violated") }]
                    }
                    SimonOutcome::Counterexample { y, rho, lhs, rhs } => {
                        vec![ReportEntry::new(name, anchor, lhs, rhs, lhs.max(rhs))
                            .param("y", format!("{y:?}"))
                            .param("rho", rho)
                            .fail("hypothesis violated")]
                    }
                }
            }
            _ => Vec::new(),
        })
    };
    let checks: Vec<&str> = cfg.checks().into_iter().filter(|c| *c != "stability").collect();
    checks
        .par_iter()
        .map(|c| run(c).unwrap_or_else(|e| failed(c, &e.to_string())))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn rows(run_id: &str, entries: &[ReportEntry]) -> Vec<ReportRow> {
    entries.iter().map(|e| ReportRow::from_entry(run_id, e)).collect()
}

fn annotate(e: ReportEntry, s: &Solved) -> ReportEntry {
    let e = e.param("lambda", s.lambda).param("h", s.u.grid().spacing());
    match &s.branch {
        Some(b) => e.param("lambda_star", b.lambda_star),
        None => e,
    }
}

fn verify_one(cfg: &RunConfig, s: &Solved, run_id: &str, with_stability: bool) -> Result<Vec<ReportRow>, HarnessError> {
    let mut entries = solution_checks(cfg, s);
    if with_stability && cfg.checks().contains(&"stability") {
        entries.push(stability_row(cfg, s)?);
    }
    let entries: Vec<ReportEntry> = entries.into_iter().map(|e| annotate(e, s)).collect();
    Ok(rows(run_id, &entries))
}

pub fn verify_single(cfg: &RunConfig) -> Result<Vec<ReportRow>, HarnessError> {
    let f = cfg.problem.nonlinearity.build()?;
    let (_, p) = setup(cfg, cfg.grid.h, &f, cfg.coefficients(0.0)?)?;
    let s = solve_configured(cfg, &p)?;
    verify_one(cfg, &s, &cfg.run_id, true)
}

pub fn group_id(cfg: &RunConfig, f: &NonlinearityConfig, eps: f64) -> String {
    format!("{}/{}/eps{}", cfg.run_id, f.tag(), eps)
}

pub fn member_id(cfg: &RunConfig, f: &NonlinearityConfig, eps: f64, fraction: f64) -> String {
    format!("{}/frac{}", group_id(cfg, f, eps), fraction)
}

/// One branch per (nonlinearity, perturbation); members at every fraction.
/// The interior stability row belongs to the group since it covers the
/// whole stable branch.
pub fn verify_family(cfg: &RunConfig, fam: &FamilyConfig) -> Result<Vec<ReportRow>, HarnessError> {
    if matches!(cfg.problem.domain, DomainConfig::Radial { .. }) {
        return Err(HarnessError::Config("family runs need a Cartesian domain".into()));
    }
    let groups: Vec<(NonlinearityConfig, f64)> = fam
        .nonlinearities
        .iter()
        .flat_map(|f| fam.perturbations.iter().map(move |e| (f.clone(), *e)))
        .collect();
    let per_group: Vec<Result<Vec<ReportRow>, HarnessError>> = groups
        .par_iter()
        .map(|(fc, eps)| {
            let f = fc.build()?;
            let (_, p) = setup(cfg, cfg.grid.h, &f, cfg.coefficients(*eps)?)?;
            let branch = Arc::new(trace(&p, cfg)?);
            let members: Vec<Result<(f64, Solved), HarnessError>> = fam
                .lambda_fractions
                .par_iter()
                .map(|frac| solve_on_branch(&p, &branch, *frac).map(|s| (*frac, s)))
                .collect();
            let mut out = Vec::new();
            let mut first = None;
            for m in members {
                let (frac, s) = m?;
                out.extend(verify_one(cfg, &s, &member_id(cfg, fc, *eps, frac), false)?);
                first.get_or_insert(s);
            }
            if cfg.checks().contains(&"stability") {
                let s = first.expect("non-empty fractions");
                let e = stability_row(cfg, &s)?.param("lambda_star", branch.lambda_star);
                out.push(ReportRow::from_entry(&group_id(cfg, fc, *eps), &e));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for g in per_group {
        all.extend(g?);
    }
    all.extend(spread_rows(cfg, &all));
    Ok(all)
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// `max ratio <= spread_factor * median ratio` per check over the members.
pub fn spread_rows(cfg: &RunConfig, rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut by_check: BTreeMap<&str, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.run_id.contains("/frac")) {
        if REGRESSION_CHECKS.contains(&r.check.as_str()) {
            by_check.entry(r.check.as_str()).or_default().push(r);
        }
    }
    let id = format!("{}/family", cfg.run_id);
    by_check
        .into_iter()
        .map(|(check, members)| {
            let mut ratios: Vec<f64> = members.iter().map(|r| r.ratio).collect();
            let finite = ratios.iter().all(|v| v.is_finite());
            ratios.sort_by(f64::total_cmp);
            let max = *ratios.last().expect("non-empty");
            let med = median(&ratios);
            let argmax = members
                .iter()
                .find(|r| r.ratio.total_cmp(&max).is_eq())
                .map(|r| r.run_id.as_str())
                .unwrap_or("");
            let mut e = ReportEntry::new(&format!("spread.{check}"), &members[0].anchor, max, med, max)
                .param("members", members.len())
                .param("argmax", argmax)
                .with_threshold(cfg.estimators.spread_factor);
            if !finite {
                e = e.fail("non-finite member ratio");
            }
            ReportRow::from_entry(&id, &e)
        })
        .collect()
}

pub fn cmd_verify(cfg: &RunConfig, paths: &Paths, timestamp: bool, bless: bool) -> Result<Outcome, HarnessError> {
    let mut rows = match &cfg.family {
        Some(fam) => verify_family(cfg, fam)?,
        None => verify_single(cfg)?,
    };
    sort_rows(&mut rows);
    match (&paths.fixtures, bless) {
        (Some(path), true) => {
            let mut fx = Fixtures::load(path)?;
            let tracked: Vec<ReportRow> = rows
                .iter()
                .filter(|r| REGRESSION_CHECKS.contains(&r.check.as_str()))
                .cloned()
                .collect();
            fx.bless(&tracked);
            fx.save(path)?;
        }
        (Some(path), false) => Fixtures::load(path)?.apply(&mut rows, cfg.estimators.regression_factor),
        (None, true) => return Err(HarnessError::Config("--bless needs output.fixtures".into())),
        (None, false) => {}
    }
    let path = paths.out.join(&cfg.output.report);
    write_csv(&path, &rows, timestamp)?;
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {}", r.run_id, r.check))
        .collect();
    let message = if failing.is_empty() {
        format!("{}: {} rows, all pass", cfg.run_id, rows.len())
    } else {
        format!("{}: {} of {} rows fail: {}", cfg.run_id, failing.len(), rows.len(), failing.join(", "))
    };
    Ok(Outcome {
        exit_code: if failing.is_empty() { EXIT_OK } else { EXIT_VERIFY },
        files: vec![path],
        message,
    })
}
