use crate::geometry::{gradient_hessian, DomainSpec, Quadrature, Region, ScalarField};
use crate::operators::{assemble_l, big_n, CoefficientSpec, OperatorError};

use super::{curvature_a, ensure_same, euclid, EstimateError, EstimateReport, ReportEntry, TestFunction};

/// Derivative data shared by the boundary estimates.
struct Derivs {
    gnorm: ScalarField,
    hnorm: ScalarField,
    curv: ScalarField,
}

fn derivs(u: &ScalarField, spec: &CoefficientSpec) -> Result<Derivs, EstimateError> {
    let (grad, hess) = gradient_hessian(u);
    let gnorm = grad.norm();
    let hnorm = hess.frobenius();
    let tol = 1e-12 * gnorm.max_abs();
    let origin = vec![0.0; u.grid().dim()];
    let curv = curvature_a(u, spec, &origin, tol)?.a;
    Ok(Derivs {
        gnorm,
        hnorm,
        curv,
    })
}

fn half_ball_radius(u: &ScalarField) -> Result<f64, EstimateError> {
    match *u.grid().domain() {
        DomainSpec::HalfBall { radius, .. } => Ok(radius),
        _ => Err(OperatorError::Unsupported("needs a half-ball grid".into()).into()),
    }
}

/// Separate pieces of the right side of the boundary curvature estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SzzTerms {
    pub lhs: f64,
    /// Gradient terms `|grad u|² (|grad eta|² + |D²eta²| + eps|grad eta²| + eps² eta²)`.
    pub t1: f64,
    /// Hessian-gradient terms `|D²u||grad u| (|grad eta²| + eps eta²)`.
    pub t2: f64,
    /// Flat-boundary term `|grad u|² (|grad eta²| + eps eta²)`.
    pub t3: f64,
}

/// `int 𝒜² eta²` against the three-line right side, constant one.
pub fn thm12_szz(
    u: &ScalarField,
    spec: &CoefficientSpec,
    eta: &TestFunction,
    eps: f64,
) -> Result<(ReportEntry, SzzTerms), EstimateError> {
    ensure_same(u, eta.values())?;
    let radius = half_ball_radius(u)?;
    eta.check_in_ball(radius)?;
    let d = derivs(u, spec)?;
    let grid = u.grid();
    let vol = Quadrature::volume(grid, &Region::Whole)?;
    let (mut lhs, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for &(i, w) in vol.nodes() {
        let e = eta.value(i);
        let ge = euclid(eta.grad(i));
        if e == 0.0 && ge == 0.0 {
            continue;
        }
        let g2 = d.gnorm.get(i).powi(2);
        let ge2 = euclid(&eta.sq_grad(i));
        let he2 = eta.sq_hess(i).frob2().sqrt();
        lhs += w * d.curv.get(i).powi(2) * e * e;
        t1 += w * g2 * (ge * ge + he2 + eps * ge2 + eps * eps * e * e);
        t2 += w * d.hnorm.get(i) * d.gnorm.get(i) * (ge2 + eps * e * e);
    }
    let flat = Quadrature::flat(grid, radius)?;
    let t3 = flat.integrate_with(|i| {
        let e = eta.value(i);
        d.gnorm.get(i).powi(2) * (euclid(&eta.sq_grad(i)) + eps * e * e)
    });
    let scale = t1 + t2 + t3 + lhs;
    let entry = ReportEntry::new("thm12.szz", "eq:szz", lhs, t1 + t2 + t3, scale)
        .param("eta", eta.name())
        .param("eps", eps)
        .param("t1", fmt(t1))
        .param("t2", fmt(t2))
        .param("t3", fmt(t3));
    Ok((entry, SzzTerms { lhs, t1, t2, t3 }))
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

/// The four boundary estimates on concentric half-balls.
///
/// Rows fail when `f` is not known to be nondecreasing or when
/// `eps > eps0`; the numbers are still reported.
pub fn thm12_suite(
    u: &ScalarField,
    spec: &CoefficientSpec,
    f_nondecreasing: bool,
    eps: f64,
    eps0: f64,
) -> Result<EstimateReport, EstimateError> {
    half_ball_radius(u)?;
    let grid = u.grid();
    let n = grid.dim();
    let d = derivs(u, spec)?;
    let vol = |r: f64| Quadrature::volume(grid, &Region::centered(n, r));
    let whole = Quadrature::volume(grid, &Region::Whole)?;
    let energy = whole.integrate_with(|i| d.gnorm.get(i).powi(2));
    let grad_l2 = energy.sqrt();

    let flat = Quadrature::flat(grid, 2.0 / 3.0)?;
    let bdy = flat.integrate_with(|i| d.gnorm.get(i).powi(2)).sqrt();
    let q47 = vol(4.0 / 7.0)?;
    let hessgrad = q47.integrate_with(|i| d.gnorm.get(i) * d.hnorm.get(i));
    let szk = vol(0.5)?.integrate_with(|i| d.curv.get(i).powi(2)).sqrt();
    let hess = q47.integrate_with(|i| d.hnorm.get(i));

    let rows = [
        ("thm12.pohozaev", "ineq:pohozaev", bdy, grad_l2),
        ("thm12.hessgrad", "ineq:hessgrad", hessgrad, energy),
        ("thm12.szkinda", "ineq:szkinda", szk, grad_l2),
        ("thm12.hessian", "ineq:hessian", hess, grad_l2),
    ];
    let mut rep = EstimateReport::default();
    for (check, anchor, lhs, rhs) in rows {
        let mut e = ReportEntry::new(check, anchor, lhs, rhs, lhs.max(rhs))
            .param("eps", eps)
            .param("eps0", eps0);
        if eps > eps0 {
            e = e.fail("eps above eps0");
        }
        if !f_nondecreasing {
            e = e.fail("f not nondecreasing");
        }
        rep.push(e);
    }
    Ok(rep)
}

/// The two Hessian bounds for superharmonic `u` tested against `zeta >= 0`.
pub fn lemma21_checks(
    u: &ScalarField,
    spec: &CoefficientSpec,
    zeta: &TestFunction,
    eps: f64,
) -> Result<EstimateReport, EstimateError> {
    ensure_same(u, zeta.values())?;
    let radius = half_ball_radius(u)?;
    zeta.check_in_ball(radius)?;
    let (node, min) = zeta.min_value();
    if min < 0.0 {
        return Err(EstimateError::Negative { node, value: min });
    }
    let grid = u.grid();
    let l = assemble_l(spec, grid)?;
    let lu = l.apply(u);
    let tol = 1e-8 * lu.max_abs().max(1.0);
    if let Some(&i) = grid.unknowns().iter().find(|&&i| lu.get(i) > tol) {
        return Err(EstimateError::NotSuperharmonic { node: i, value: lu.get(i) });
    }
    let d = derivs(u, spec)?;
    let vol = Quadrature::volume(grid, &Region::Whole)?;
    let flat = Quadrature::flat(grid, radius)?;
    let zg = |i: usize| euclid(zeta.grad(i));

    let lhs1 = vol.integrate_with(|i| d.hnorm.get(i) * zeta.value(i));
    let rhs1 = vol.integrate_with(|i| d.gnorm.get(i) * (zg(i) + eps * zeta.value(i)) + d.curv.get(i) * zeta.value(i))
        + flat.integrate_with(|i| d.gnorm.get(i) * zeta.value(i));
    let lhs2 = vol.integrate_with(|i| d.hnorm.get(i) * d.gnorm.get(i) * zeta.value(i));
    let rhs2 = vol.integrate_with(|i| {
        let g = d.gnorm.get(i);
        g * g * (zg(i) + eps * zeta.value(i)) + d.curv.get(i) * g * zeta.value(i)
    }) + flat.integrate_with(|i| d.gnorm.get(i).powi(2) * zeta.value(i));

    let mut rep = EstimateReport::default();
    rep.push(ReportEntry::new("lemma21.hess", "hess:test", lhs1, rhs1, lhs1.max(rhs1)).param("zeta", zeta.name()).param("eps", eps));
    rep.push(
        ReportEntry::new("lemma21.hessgrad", "hessgrad:test", lhs2, rhs2, lhs2.max(rhs2))
            .param("zeta", zeta.name())
            .param("eps", eps),
    );
    Ok(rep)
}

/// Both sides of the boundary Pohozaev identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pohozaev {
    /// `sqrt(a_nn(0)) int_{flat} |grad u|²_{A0} eta²`.
    pub lhs: f64,
    /// `int div V eta² + int V . grad(eta²)`.
    pub rhs: f64,
    pub residual: f64,
}

/// `V = |grad u|²_{A0} N - 2 (N . grad u) A0 grad u`, `div V = -2 (N . grad u) tr(A0 D²u)`.
pub fn pohozaev_identity(u: &ScalarField, spec: &CoefficientSpec, eta: &TestFunction) -> Result<Pohozaev, EstimateError> {
    ensure_same(u, eta.values())?;
    let radius = half_ball_radius(u)?;
    eta.check_in_ball(radius)?;
    let grid = u.grid();
    let n = grid.dim();
    let origin = vec![0.0; n];
    let a0 = spec.a_at(&origin)?;
    let nv = big_n(spec, &origin)?;
    let (grad, hess) = gradient_hessian(u);
    let vol = Quadrature::volume(grid, &Region::Whole)?;
    let rhs = vol.integrate_with(|i| {
        let p = grad.at(i);
        let e = eta.value(i);
        let ge = eta.sq_grad(i);
        if e == 0.0 {
            return 0.0;
        }
        let ndu: f64 = nv.iter().zip(p).map(|(a, b)| a * b).sum();
        let ap = a0.mul_vec(p);
        let pa = a0.quad(p);
        let div = -2.0 * ndu * a0.mul(&hess.at(i)).trace();
        let vdot: f64 = (0..n).map(|k| (pa * nv[k] - 2.0 * ndu * ap[k]) * ge[k]).sum();
        div * e * e + vdot
    });
    let flat = Quadrature::flat(grid, radius)?;
    let lhs = a0.get(n - 1, n - 1).sqrt() * flat.integrate_with(|i| a0.quad(grad.at(i)) * eta.value(i).powi(2));
    Ok(Pohozaev {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}
