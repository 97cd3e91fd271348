use crate::exprlang::Flag;
use crate::geometry::ScalarField;
use crate::linalg::norm_inf;

use super::{Problem, SolverError};

#[derive(Debug, Clone)]
pub struct MonotoneResult {
    pub u: ScalarField,
    pub iterations: usize,
    /// Shift `K = lambda max f'` on `[min lower, max upper]`.
    pub shift: f64,
}

/// Sub/supersolution iteration from `lower`:
/// `(L_h - K) u_{k+1} = -lambda f(u_k) - K u_k - g`.
pub fn monotone_iteration(
    p: &Problem,
    lower: &ScalarField,
    upper: &ScalarField,
) -> Result<MonotoneResult, SolverError> {
    if !lower.grid().same_as(p.grid()) || !upper.grid().same_as(p.grid()) {
        return Err(SolverError::GridMismatch);
    }
    let lo = lower.unknown_values();
    let hi = upper.unknown_values();
    let lambda = p.lambda();
    let tol = p.tol.monotone_tol;
    if let Some(k) = lo.iter().zip(&hi).position(|(a, b)| a > b) {
        return Err(SolverError::Hypothesis(format!("lower > upper at unknown {k}")));
    }
    let (umin, umax) = lo
        .iter()
        .chain(&hi)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let mut f = p.nonlinearity().clone();
    if matches!(f.flags.nondecreasing, Flag::Unknown) {
        f.check_flags(umin, umax.max(umin + 1e-12), lambda);
    }
    if !f.flags.nondecreasing.holds() {
        return Err(SolverError::Hypothesis("f is not nondecreasing on [lower, upper]".into()));
    }

    let scale = 1.0 + p.rhs_scale(&hi, lambda)?.max(p.rhs_scale(&lo, lambda)?);
    let r_lo = p.residual(&lo)?;
    if let Some(k) = r_lo.iter().position(|&r| r < -tol * scale) {
        return Err(SolverError::Hypothesis(format!(
            "lower is not a subsolution at unknown {k} (residual {:.3e})",
            r_lo[k]
        )));
    }
    let r_hi = p.residual(&hi)?;
    if let Some(k) = r_hi.iter().position(|&r| r > tol * scale) {
        return Err(SolverError::Hypothesis(format!(
            "upper is not a supersolution at unknown {k} (residual {:.3e})",
            r_hi[k]
        )));
    }

    let samples = 1000;
    let mut fmax: f64 = 0.0;
    for i in 0..=samples {
        let v = umin + (umax - umin) * i as f64 / samples as f64;
        fmax = fmax.max(f.fprime(v, lambda)?);
    }
    let shift = lambda * fmax;
    let n = lo.len();
    let lu = p.operator().matrix().add_diagonal(&vec![-shift; n]).lu()?;

    let mut u = lo;
    for it in 1..=p.tol.monotone_max_iter {
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let g = p.source.as_ref().map_or(0.0, |g| g[k]);
            rhs[k] = -lambda * f.f(u[k], lambda)? - shift * u[k] - g;
        }
        let next = lu.solve(&rhs)?;
        let band = tol * (1.0 + norm_inf(&hi));
        if let Some(k) = (0..n).find(|&k| next[k] > hi[k] + band || next[k] < u[k] - band) {
            return Err(SolverError::Hypothesis(format!(
                "iterate left the order interval at unknown {k} (iteration {it})"
            )));
        }
        let change = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        if change <= tol * (1.0 + norm_inf(&u)) {
            return Ok(MonotoneResult {
                u: ScalarField::from_unknowns(p.grid(), &u),
                iterations: it,
                shift,
            });
        }
    }
    Err(SolverError::NoConvergence {
        iterations: p.tol.monotone_max_iter,
        residual: norm_inf(&p.residual(&u)?),
    })
}
