use crate::geometry::ScalarField;
use crate::linalg::{dot, norm_inf, CsrMatrix};
use crate::operators::DiscreteOperator;

use super::{SolverError, Tolerances};

/// `J phi = -mu phi` with `phi > 0`, `max phi = 1`.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub mu: f64,
    pub phi: ScalarField,
    pub iterations: usize,
    /// `||J phi + mu phi||_inf`.
    pub residual: f64,
}

/// Principal eigenpair of `-J` by shifted inverse iteration.
///
/// The shift sits below the Gershgorin bound, so the wanted eigenvalue is
/// the one of smallest modulus of the shifted matrix.
pub fn principal_eigenvalue(j: &DiscreteOperator, tol: &Tolerances) -> Result<Eigenpair, SolverError> {
    let m = j.matrix().scaled(-1.0);
    let (mu, x, iterations, residual) = inverse_iteration(&m, tol)?;
    let grid = j.grid();
    let (index, min) = x
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if min <= 0.0 {
        return Err(SolverError::NotPositive { min, index });
    }
    Ok(Eigenpair {
        mu,
        phi: ScalarField::from_unknowns(grid, &x),
        iterations,
        residual,
    })
}

pub(crate) fn inverse_iteration(m: &CsrMatrix, tol: &Tolerances) -> Result<(f64, Vec<f64>, usize, f64), SolverError> {
    let n = m.dim();
    let s = m.gershgorin_lower() - 1.0;
    let shifted = m.add_diagonal(&vec![-s; n]);
    let lu = shifted.lu()?;
    // Residual target, floored at the round-off level of `M phi`.
    let res_tol = 1e-9_f64.max(20.0 * f64::EPSILON * m.norm_inf());
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut mu = f64::NAN;
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=tol.eig_max_iter {
        let y = lu.solve(&x)?;
        let new_mu = s + dot(&x, &x) / dot(&x, &y);
        change = (new_mu - mu).abs();
        mu = new_mu;
        let ny = dot(&y, &y).sqrt();
        x = y.iter().map(|v| v / ny).collect();
        // Normalize for the residual check: max-norm one, positive sum.
        let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / norm_inf(&x);
        let phi: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let mphi = m.matvec(&phi);
        residual = mphi.iter().zip(&phi).map(|(a, b)| (a - mu * b).abs()).fold(0.0, f64::max);
        if change <= tol.eig_tol * (1.0 + mu.abs()) && residual <= res_tol {
            return Ok((mu, phi, it, residual));
        }
    }
    Err(SolverError::Stagnation {
        iterations: tol.eig_max_iter,
        change,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::Nonlinearity;
    use crate::geometry::{build_grid, DomainSpec};
    use crate::operators::{assemble_ju, assemble_l, CoefficientSpec};
    use std::f64::consts::PI;

    fn laplace_mu(dim: usize, h: f64) -> f64 {
        let g = build_grid(&DomainSpec::cube(dim, 0.0, 1.0), h).unwrap();
        let l = assemble_l(&CoefficientSpec::identity(dim), &g).unwrap();
        let e = principal_eigenvalue(&l, &Tolerances::default()).unwrap();
        assert!(e.residual <= 1e-8);
        e.mu
    }

    #[test]
    fn dirichlet_eigenvalues() {
        // Discrete eigenvalue of the 3-point Laplacian is (4/h^2) sin^2(pi h / 2).
        let h = 1.0 / 256.0;
        let disc = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let mu = laplace_mu(1, h);
        assert!((mu - disc).abs() < 1e-8 * disc);
        assert!((mu - PI * PI).abs() < 1e-3 * PI * PI);
        let mu2 = laplace_mu(2, 1.0 / 64.0);
        assert!((mu2 - 2.0 * PI * PI).abs() < 1e-2 * 2.0 * PI * PI);
    }

    #[test]
    fn shift_by_jacobian_diagonal() {
        let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), 1.0 / 64.0).unwrap();
        let l = assemble_l(&CoefficientSpec::identity(1), &g).unwrap();
        let u = ScalarField::zeros(&g);
        let j = assemble_ju(&l, &Nonlinearity::exp(), 2.0, &u).unwrap();
        let mu0 = principal_eigenvalue(&l, &Tolerances::default()).unwrap().mu;
        let mu = principal_eigenvalue(&j, &Tolerances::default()).unwrap().mu;
        assert!((mu - (mu0 - 2.0)).abs() < 1e-9);
    }
}
