use crate::geometry::ScalarField;
use crate::linalg::norm_inf;

use super::{Problem, SolverError};

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub u: ScalarField,
    pub iterations: usize,
    /// Final `||R(u)||_inf`.
    pub residual: f64,
    /// Tolerance the residual was tested against.
    pub tolerance: f64,
}

/// Damped Newton from `u0` (zero when `None`).
pub fn solve_newton(p: &Problem, u0: Option<&ScalarField>) -> Result<NewtonSolution, SolverError> {
    let start = match u0 {
        Some(u) if !u.grid().same_as(p.grid()) => return Err(SolverError::GridMismatch),
        Some(u) => u.unknown_values(),
        None => vec![0.0; p.grid().unknown_count()],
    };
    let (u, iterations, residual, tolerance) = newton_values(p, p.lambda(), start)?;
    Ok(NewtonSolution {
        u: ScalarField::from_unknowns(p.grid(), &u),
        iterations,
        residual,
        tolerance,
    })
}

/// Residual tolerance: relative part plus a round-off floor for `L_h u`.
pub(crate) fn tolerance(p: &Problem, u: &[f64], lambda: f64) -> Result<f64, SolverError> {
    let l_norm = p.operator().matrix().norm_inf();
    Ok(p.tol.newton_rtol * (1.0 + p.rhs_scale(u, lambda)?) + 50.0 * f64::EPSILON * l_norm * norm_inf(u))
}

fn residual_norm(p: &Problem, u: &[f64], lambda: f64) -> f64 {
    match p.residual_at(u, lambda) {
        Ok(r) => {
            let n = norm_inf(&r);
            if n.is_finite() {
                n
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

pub(crate) fn newton_values(
    p: &Problem,
    lambda: f64,
    mut u: Vec<f64>,
) -> Result<(Vec<f64>, usize, f64, f64), SolverError> {
    let mut r = p.residual_at(&u, lambda)?;
    let mut rn = norm_inf(&r);
    for it in 0..=p.tol.newton_max_iter {
        let tol = tolerance(p, &u, lambda)?;
        if rn <= tol {
            return Ok((u, it, rn, tol));
        }
        if it == p.tol.newton_max_iter {
            break;
        }
        let j = p.jacobian_at(&u, lambda)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let du = j.lu()?.solve(&neg)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=p.tol.newton_max_halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + t * b).collect();
            let tn = residual_norm(p, &trial, lambda);
            if tn < rn {
                u = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(SolverError::Divergence {
                iteration: it,
                residual: rn,
                halvings: p.tol.newton_max_halvings,
            });
        }
        r = p.residual_at(&u, lambda)?;
        rn = norm_inf(&r);
    }
    Err(SolverError::NoConvergence {
        iterations: p.tol.newton_max_iter,
        residual: rn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse, Nonlinearity, Signature};
    use crate::geometry::{build_grid, DomainSpec};
    use crate::operators::CoefficientSpec;

    fn gelfand_1d(h: f64, lambda: f64) -> Problem {
        let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), h).unwrap();
        Problem::new(&g, CoefficientSpec::identity(1), Nonlinearity::exp(), lambda).unwrap()
    }

    // u = -2 ln(cosh(t(x-1/2)/2) / cosh(t/4)) with t^2 = 2 lambda cosh^2(t/4);
    // the smaller root gives the minimal solution.
    fn gelfand_exact_max(lambda: f64) -> f64 {
        let g = |t: f64| t * t - 2.0 * lambda * (t / 4.0).cosh().powi(2);
        let (mut lo, mut hi) = (0.0, 4.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if g(m) < 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        2.0 * (0.5 * (lo + hi) / 4.0).cosh().ln()
    }

    #[test]
    fn gelfand_1d_matches_closed_form() {
        for (lambda, want) in [(0.1, 0.0126323), (1.0, 0.1405392)] {
            let exact = gelfand_exact_max(lambda);
            assert!((exact - want).abs() < 1e-6, "oracle {exact} vs {want}");
            let s = solve_newton(&gelfand_1d(1.0 / 256.0, lambda), None).unwrap();
            assert!((s.u.max() - exact).abs() < 1e-4, "{} vs {exact}", s.u.max());
            assert!(s.residual <= s.tolerance);
        }
    }

    #[test]
    fn manufactured_2d_square_second_order() {
        let sig = Signature::coords(2);
        let exact = parse("sin(pi*x1)*sin(pi*x2)", &sig).unwrap();
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), h).unwrap();
            let p = Problem::new(&g, CoefficientSpec::identity(2), Nonlinearity::exp(), 0.5)
                .unwrap()
                .with_manufactured(&exact)
                .unwrap();
            let s = solve_newton(&p, None).unwrap();
            let err = g
                .unknowns()
                .iter()
                .map(|&i| {
                    let x = g.coords(i);
                    (s.u.get(i) - exact.eval(&x[..2]).unwrap()).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn beyond_fold_fails() {
        let p = gelfand_1d(1.0 / 64.0, 4.0);
        assert!(solve_newton(&p, None).is_err());
    }
}
