use crate::geometry::ScalarField;
use crate::linalg::{dot, norm_inf};

use super::eigen::inverse_iteration;
use super::newton::{newton_values, tolerance};
use super::{Problem, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Stable,
    Upper,
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub lambda: f64,
    pub u: ScalarField,
    pub mu1: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub segment: Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Step fell below `min_step_rel * lambda` after Newton failures.
    StepUnderflow,
    /// Step fell below the floor because trial points had `mu1 < -tol_eig`.
    EigenCrossing,
    LambdaMax,
    MaxPoints,
    /// The start point itself could not be computed.
    StartFailed,
}

/// Step control for [`trace_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPolicy {
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step_rel: f64,
    pub max_points: usize,
    pub lambda_max: f64,
    /// `tol_eig = eig_rel * |mu1(lambda = 0)|`.
    pub eig_rel: f64,
    /// Continue around the fold by pseudo-arclength.
    pub arclength: Option<ArclengthPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArclengthPolicy {
    pub ds: f64,
    pub max_points: usize,
    /// Stop once `max u` exceeds this.
    pub max_u: f64,
}

impl Default for BranchPolicy {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            max_step: 0.5,
            min_step_rel: 1e-6,
            max_points: 10_000,
            lambda_max: f64::INFINITY,
            eig_rel: 1e-6,
            arclength: None,
        }
    }
}

impl Default for ArclengthPolicy {
    fn default() -> Self {
        Self {
            ds: 0.1,
            max_points: 200,
            max_u: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Last accepted `lambda` of natural continuation.
    pub lambda_star: f64,
    pub termination: Termination,
    /// Largest `lambda` seen in arclength mode.
    pub fold_lambda: Option<f64>,
    pub tol_eig: f64,
}

impl Branch {
    pub fn stable(&self) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.segment == Segment::Stable)
    }
}

fn mu1_at(p: &Problem, u: &[f64], lambda: f64) -> Result<f64, SolverError> {
    let m = p.jacobian_at(u, lambda)?.scaled(-1.0);
    let (mu, x, _, _) = inverse_iteration(&m, &p.tol)?;
    if let Some((index, &min)) = x.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(SolverError::NotPositive { min, index });
    }
    Ok(mu)
}

/// `du/dlambda` from `J u_lambda = -R_lambda`.
fn tangent(p: &Problem, u: &[f64], lambda: f64) -> Result<Vec<f64>, SolverError> {
    let rl: Vec<f64> = p.d_lambda(u, lambda)?.iter().map(|v| -v).collect();
    Ok(p.jacobian_at(u, lambda)?.lu()?.solve(&rl)?)
}

/// Natural continuation from `lambda = 0`, optionally followed by
/// pseudo-arclength continuation around the fold.
pub fn trace_branch(p: &Problem, policy: &BranchPolicy) -> Branch {
    let grid = p.grid().clone();
    let mut points: Vec<BranchPoint> = Vec::new();
    let mut vals: Vec<Vec<f64>> = Vec::new();
    let start = newton_values(p, 0.0, vec![0.0; grid.unknown_count()])
        .and_then(|(u, it, res, _)| Ok((mu1_at(p, &u, 0.0)?, u, it, res)));
    let (mu0, u0, it0, res0) = match start {
        Ok(s) => s,
        Err(_) => {
            return Branch {
                points,
                lambda_star: 0.0,
                termination: Termination::StartFailed,
                fold_lambda: None,
                tol_eig: 0.0,
            }
        }
    };
    let tol_eig = policy.eig_rel * mu0.abs();
    points.push(BranchPoint {
        lambda: 0.0,
        u: ScalarField::from_unknowns(&grid, &u0),
        mu1: mu0,
        newton_iters: it0,
        residual: res0,
        segment: Segment::Stable,
    });
    vals.push(u0);

    let mut lam = 0.0;
    let mut step = policy.initial_step.min(policy.max_step);
    let mut eig_reject = false;
    let termination = loop {
        if points.len() >= policy.max_points {
            break Termination::MaxPoints;
        }
        if lam >= policy.lambda_max {
            break Termination::LambdaMax;
        }
        if step < policy.min_step_rel * lam.max(policy.initial_step) {
            break if eig_reject {
                Termination::EigenCrossing
            } else {
                Termination::StepUnderflow
            };
        }
        let trial = (lam + step).min(policy.lambda_max);
        let u = vals.last().unwrap();
        let pred = match tangent(p, u, lam) {
            Ok(t) => u.iter().zip(&t).map(|(a, b)| a + (trial - lam) * b).collect(),
            Err(_) => u.clone(),
        };
        let attempt = newton_values(p, trial, pred).and_then(|(v, it, res, _)| Ok((mu1_at(p, &v, trial)?, v, it, res)));
        match attempt {
            Ok((mu, v, it, res)) if mu >= -tol_eig => {
                points.push(BranchPoint {
                    lambda: trial,
                    u: ScalarField::from_unknowns(&grid, &v),
                    mu1: mu,
                    newton_iters: it,
                    residual: res,
                    segment: Segment::Stable,
                });
                vals.push(v);
                lam = trial;
                if it <= 3 {
                    step = (step * 1.5).min(policy.max_step);
                }
            }
            Ok(_) => {
                eig_reject = true;
                step *= 0.5;
            }
            Err(_) => {
                eig_reject = false;
                step *= 0.5;
            }
        }
    };
    let mut branch = Branch {
        points,
        lambda_star: lam,
        termination,
        fold_lambda: None,
        tol_eig,
    };
    if let Some(ap) = &policy.arclength {
        if matches!(termination, Termination::StepUnderflow | Termination::EigenCrossing) && vals.len() >= 2 {
            arclength(p, ap, &mut branch, &vals);
        }
    }
    branch
}

/// Keller pseudo-arclength with bordering, seeded by the last two points.
fn arclength(p: &Problem, ap: &ArclengthPolicy, branch: &mut Branch, vals: &[Vec<f64>]) {
    let grid = p.grid().clone();
    let n = vals[0].len();
    let theta = 1.0 / n as f64;
    let k = vals.len();
    let (mut u, mut lam) = (vals[k - 1].clone(), branch.points[k - 1].lambda);
    // Initial tangent from the local derivative.
    let mut tu = match tangent(p, &u, lam) {
        Ok(t) => t,
        Err(_) => return,
    };
    let mut tl = 1.0;
    normalize(&mut tu, &mut tl, theta);
    let mut ds = ap.ds;
    let mut fold = lam;
    let mut turned = false;
    let mut added = 0;
    while added < ap.max_points && ds > 1e-8 {
        let up: Vec<f64> = u.iter().zip(&tu).map(|(a, b)| a + ds * b).collect();
        let lp = lam + ds * tl;
        match corrector(p, &u, lam, &tu, tl, ds, theta, up, lp) {
            Some((nu, nl, it, res)) => {
                if nl <= 0.0 || (turned && nl > lam) {
                    break;
                }
                if nl < lam {
                    turned = true;
                }
                fold = fold.max(nl);
                let mu = match mu1_at(p, &nu, nl) {
                    Ok(m) => m,
                    Err(_) => break,
                };
                let mut ntu: Vec<f64> = nu.iter().zip(&u).map(|(a, b)| (a - b) / ds).collect();
                let mut ntl = (nl - lam) / ds;
                normalize(&mut ntu, &mut ntl, theta);
                tu = ntu;
                tl = ntl;
                let umax = norm_inf(&nu);
                branch.points.push(BranchPoint {
                    lambda: nl,
                    u: ScalarField::from_unknowns(&grid, &nu),
                    mu1: mu,
                    newton_iters: it,
                    residual: res,
                    segment: if mu >= -branch.tol_eig && !turned {
                        Segment::Stable
                    } else {
                        Segment::Upper
                    },
                });
                u = nu;
                lam = nl;
                added += 1;
                if umax > ap.max_u {
                    break;
                }
                if it <= 3 {
                    ds = (ds * 1.5).min(ap.ds * 4.0);
                }
            }
            None => ds *= 0.5,
        }
    }
    branch.fold_lambda = Some(fold);
}

fn normalize(tu: &mut [f64], tl: &mut f64, theta: f64) {
    let s = (theta * dot(tu, tu) + *tl * *tl).sqrt();
    tu.iter_mut().for_each(|v| *v /= s);
    *tl /= s;
}

#[allow(clippy::too_many_arguments)]
fn corrector(
    p: &Problem,
    u0: &[f64],
    l0: f64,
    tu: &[f64],
    tl: f64,
    ds: f64,
    theta: f64,
    mut u: Vec<f64>,
    mut lam: f64,
) -> Option<(Vec<f64>, f64, usize, f64)> {
    for it in 0..=p.tol.newton_max_iter {
        if lam < 0.0 {
            return None;
        }
        let r = p.residual_at(&u, lam).ok()?;
        let rn = norm_inf(&r);
        let du: Vec<f64> = u.iter().zip(u0).map(|(a, b)| a - b).collect();
        let nc = theta * dot(tu, &du) + tl * (lam - l0) - ds;
        if !rn.is_finite() {
            return None;
        }
        if rn <= tolerance(p, &u, lam).ok()? && nc.abs() <= 1e-10 * ds {
            return Some((u, lam, it, rn));
        }
        if it == p.tol.newton_max_iter {
            return None;
        }
        let lu = p.jacobian_at(&u, lam).ok()?.lu().ok()?;
        let a = lu.solve(&r.iter().map(|v| -v).collect::<Vec<_>>()).ok()?;
        let rl = p.d_lambda(&u, lam).ok()?;
        let b = lu.solve(&rl.iter().map(|v| -v).collect::<Vec<_>>()).ok()?;
        let denom = theta * dot(tu, &b) + tl;
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let dl = (-nc - theta * dot(tu, &a)) / denom;
        for k in 0..u.len() {
            u[k] += a[k] + dl * b[k];
        }
        lam += dl;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::Nonlinearity;
    use crate::geometry::{build_grid, DomainSpec};
    use crate::operators::CoefficientSpec;

    fn gelfand(h: f64) -> Problem {
        let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), h).unwrap();
        Problem::new(&g, CoefficientSpec::identity(1), Nonlinearity::exp(), 0.0).unwrap()
    }

    #[test]
    fn fold_and_eigenvalue_trend_1d() {
        let b = trace_branch(&gelfand(1.0 / 128.0), &BranchPolicy::default());
        assert_eq!(b.termination, Termination::StepUnderflow);
        assert!((b.lambda_star - 3.5138307191).abs() < 0.01 * 3.5138307191, "{}", b.lambda_star);
        for w in b.points.windows(2) {
            assert!(w[1].lambda > w[0].lambda);
            assert!(w[1].mu1 < w[0].mu1);
            for (a, c) in w[0].u.values().iter().zip(w[1].u.values()) {
                assert!(*c >= a - 1e-10);
            }
        }
        assert!(b.points.last().unwrap().mu1 < 0.05 * b.points[0].mu1);
    }

    #[test]
    fn linear_branch_stops_at_first_eigenvalue() {
        let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), 1.0 / 128.0).unwrap();
        let p = Problem::new(&g, CoefficientSpec::identity(1), Nonlinearity::linear(), 0.0).unwrap();
        let b = trace_branch(&p, &BranchPolicy::default());
        assert_eq!(b.termination, Termination::EigenCrossing);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((b.lambda_star - pi2).abs() < 1e-3 * pi2, "{}", b.lambda_star);
    }

    #[test]
    fn arclength_turns_at_fold() {
        let policy = BranchPolicy {
            arclength: Some(ArclengthPolicy {
                max_points: 40,
                ..Default::default()
            }),
            ..Default::default()
        };
        let b = trace_branch(&gelfand(1.0 / 64.0), &policy);
        let fold = b.fold_lambda.unwrap();
        assert!((fold - 3.5138).abs() < 0.01 * 3.5138, "{fold}");
        assert!(b.points.iter().any(|p| p.segment == Segment::Upper && p.mu1 < 0.0));
    }
}
