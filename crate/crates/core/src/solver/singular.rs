use crate::exprlang::Nonlinearity;
use crate::geometry::{Grid, ScalarField};
use crate::operators::{assemble_ju, assemble_l, CoefficientSpec};

use super::SolverError;

const R_MIN: f64 = 1e-4;
const CELLS: usize = 4000;

/// Stability of the singular solution `u = -2 ln r`, `lambda = 2(n-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialStability {
    pub n: usize,
    /// Smallest value of `Q(xi) / int xi^2 r^{n-3}` over discrete `xi`.
    pub mu_min: f64,
    /// Continuum value on `(r_min, 1)`: `(n-2)^2/4 - 2(n-2) + (pi / ln(1/r_min))^2`.
    pub analytic: f64,
    pub stable: bool,
}

/// Sign of `int |xi'|^2 - 2(n-2) xi^2 / r^2` (radial weight) on a geometric
/// grid over `(1e-4, 1)`, Dirichlet at both ends.
pub fn radial_singular_stability(n: usize, tol: f64) -> Result<RadialStability, SolverError> {
    if !(3..=15).contains(&n) {
        return Err(SolverError::DimensionRange(n));
    }
    let grid = Grid::radial_geometric(n, R_MIN, 1.0, CELLS).map_err(|e| SolverError::Hypothesis(e.to_string()))?;
    let l = assemble_l(&CoefficientSpec::identity(1), &grid)?;
    let lambda = 2.0 * (n as f64 - 2.0);
    let ustar = ScalarField::from_fn(&grid, |x| -2.0 * x[0].ln());
    let j = assemble_ju(&l, &Nonlinearity::exp(), lambda, &ustar)?;
    let r = grid.radii().expect("radial grid");

    // T = -V J is the symmetric stiffness minus potential; M is the weight of xi^2 / r^2.
    let nn = n as i32;
    let m = grid.unknown_count();
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m);
    let mut mass = Vec::with_capacity(m);
    for (k, &i) in grid.unknowns().iter().enumerate() {
        let lo = 0.5 * (r[i - 1] + r[i]);
        let hi = 0.5 * (r[i] + r[i + 1]);
        let vol = (hi.powi(nn) - lo.powi(nn)) / n as f64;
        diag.push(-vol * j.matrix().get(k, k));
        off.push(if k == 0 { 0.0 } else { -vol * j.matrix().get(k, k - 1) });
        mass.push(vol / (r[i] * r[i]));
    }
    let negatives = |mu: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for k in 0..m {
            d = diag[k] - mu * mass[k] - if k == 0 { 0.0 } else { off[k] * off[k] / d };
            if d == 0.0 {
                d = f64::MIN_POSITIVE;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut lo = -lambda - 1.0;
    let mut hi = 1.0;
    while negatives(hi) == 0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if negatives(mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mu_min = 0.5 * (lo + hi);
    let nf = n as f64 - 2.0;
    let analytic = nf * nf / 4.0 - 2.0 * nf + (std::f64::consts::PI / (1.0 / R_MIN).ln()).powi(2);
    Ok(RadialStability {
        n,
        mu_min,
        analytic,
        stable: mu_min >= -tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_threshold() {
        for (n, stable) in [(3, false), (9, false), (10, true), (11, true)] {
            let s = radial_singular_stability(n, 1e-8).unwrap();
            assert_eq!(s.stable, stable, "n = {n}: {s:?}");
            assert!((s.mu_min - s.analytic).abs() < 1e-2 * (1.0 + s.analytic.abs()), "{s:?}");
        }
        assert!(radial_singular_stability(2, 1e-8).is_err());
        assert!(radial_singular_stability(16, 1e-8).is_err());
    }
}
