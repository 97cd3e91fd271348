use crate::exprlang::Nonlinearity;
use crate::geometry::{NodeKind, Quadrature, Region, ScalarField};
use crate::operators::{assemble_ju, assemble_l, CoefficientSpec, OperatorError};

use super::{ensure_same, EstimateError, TestFunction};

/// `|g - ½ v A^{-1} w|²_A` at `x`.
fn weighted_defect(
    spec: &CoefficientSpec,
    x: &[f64],
    g: &[f64],
    v: f64,
    w: &[f64],
) -> Result<f64, EstimateError> {
    let n = g.len();
    let a = spec.a_at(x)?;
    let aw = a.inverse_spd()?.mul_vec(w);
    let d: Vec<f64> = (0..n).map(|k| g[k] - 0.5 * v * aw[k]).collect();
    Ok(a.quad(&d))
}

/// `(int lambda f'(u) xi², int |grad xi - ½ xi A^{-1} b̂|²_A)`.
pub fn stability_gap(
    u: &ScalarField,
    spec: &CoefficientSpec,
    f: &Nonlinearity,
    lambda: f64,
    xi: &TestFunction,
) -> Result<(f64, f64), EstimateError> {
    ensure_same(u, xi.values())?;
    let grid = u.grid();
    xi.check_compact_in(grid.domain())?;
    let n = grid.dim();
    let quad = Quadrature::volume(grid, &Region::Whole)?;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for &(i, w) in quad.nodes() {
        let v = xi.value(i);
        let g = xi.grad(i);
        if v == 0.0 && g.iter().all(|c| *c == 0.0) {
            continue;
        }
        let x = grid.coords(i);
        let x = &x[..n];
        lhs += w * lambda * f.fprime(u.get(i), lambda)? * v * v;
        let bh = spec.hat_b_at(x)?;
        rhs += w * weighted_defect(spec, x, g, v, &bh[..n])?;
    }
    Ok((lhs, rhs))
}

/// `(int c (J_u c) eta², int c² |grad eta - ½ eta A^{-1} b|²_A)` with the
/// discrete `J_u` applied to `c`.
#[allow(clippy::too_many_arguments)]
pub fn stability_gap_boundary(
    u: &ScalarField,
    spec: &CoefficientSpec,
    f: &Nonlinearity,
    lambda: f64,
    c: &ScalarField,
    eta: &TestFunction,
) -> Result<(f64, f64), EstimateError> {
    ensure_same(u, c)?;
    ensure_same(u, eta.values())?;
    let grid = u.grid();
    let n = grid.dim();
    if !grid.is_half_ball() {
        return Err(OperatorError::Unsupported("boundary stability needs a half-ball".into()).into());
    }
    let crate::geometry::DomainSpec::HalfBall { radius, .. } = *grid.domain() else {
        unreachable!()
    };
    eta.check_in_ball(radius)?;
    let tol = 1e-12 * (1.0 + c.max_abs());
    for i in 0..grid.node_count() {
        if grid.kind(i) == NodeKind::FlatBoundary && eta.in_support(i) && c.get(i).abs() > tol {
            return Err(EstimateError::BoundaryValue { node: i, value: c.get(i) });
        }
    }
    let l = assemble_l(spec, grid)?;
    let j = assemble_ju(&l, f, lambda, u)?;
    let jc = j.apply(c);
    let quad = Quadrature::volume(grid, &Region::Whole)?;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for &(i, w) in quad.nodes() {
        let e = eta.value(i);
        let g = eta.grad(i);
        let ci = c.get(i);
        if ci == 0.0 || (e == 0.0 && g.iter().all(|v| *v == 0.0)) {
            continue;
        }
        let x = grid.coords(i);
        let x = &x[..n];
        lhs += w * ci * jc.get(i) * e * e;
        let b = spec.b_at(x)?;
        rhs += w * ci * ci * weighted_defect(spec, x, g, e, &b[..n])?;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_sine() {
        // lambda f' = c constant: lhs = c/2, rhs = pi²/2.
        let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), 1.0 / 256.0).unwrap();
        let u = ScalarField::zeros(&g);
        let xi = TestFunction::from_field("sin", ScalarField::from_fn(&g, |x| (PI * x[0]).sin()));
        let c = 3.0;
        let (lhs, rhs) = stability_gap(&u, &CoefficientSpec::identity(1), &Nonlinearity::linear(), c, &xi).unwrap();
        assert!((lhs - c / 2.0).abs() < 1e-6, "{lhs}");
        assert!((rhs - PI * PI / 2.0).abs() < 1e-3, "{rhs}");
    }

    #[test]
    fn zero_test_functions() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 16.0).unwrap();
        let u = ScalarField::zeros(&g);
        let s = CoefficientSpec::identity(2);
        let z = TestFunction::zero(&g);
        assert_eq!(stability_gap(&u, &s, &Nonlinearity::exp(), 1.0, &z).unwrap(), (0.0, 0.0));
        let eta = TestFunction::cutoff(&g, 0.3, 0.8);
        let c = ScalarField::zeros(&g);
        assert_eq!(stability_gap_boundary(&u, &s, &Nonlinearity::exp(), 1.0, &c, &eta).unwrap(), (0.0, 0.0));
        let bad = ScalarField::from_fn(&g, |_| 1.0);
        assert!(matches!(
            stability_gap_boundary(&u, &s, &Nonlinearity::exp(), 1.0, &bad, &eta),
            Err(EstimateError::BoundaryValue { .. })
        ));
    }
}
