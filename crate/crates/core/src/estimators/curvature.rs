use crate::geometry::{gradient_hessian, ScalarField};
use crate::linalg::SmallMat;
use crate::operators::{big_n, CoefficientSpec, OperatorError};

use super::EstimateError;

/// `𝒜` in both of its forms, and `𝒜₀` (frozen coefficients).
#[derive(Debug, Clone)]
pub struct CurvatureFields {
    /// Trace form.
    pub a: ScalarField,
    /// Hilbert-Schmidt form with the unit field `n`.
    pub a_alt: ScalarField,
    pub a0: ScalarField,
    /// `true` where `|grad u| > tol_grad`.
    pub mask: Vec<bool>,
    /// Largest `|𝒜² - 𝒜_alt²| / ||S_x H S_0||²_HS` over unmasked nodes.
    pub max_rel_diff: f64,
    /// Largest `|𝒜² - 𝒜₀²| / (|x| 𝒜₀²)` where `𝒜₀` is not negligible.
    pub comparability: f64,
}

/// Both expressions of `𝒜` at every active node of a Cartesian grid.
pub fn curvature_a(
    u: &ScalarField,
    spec: &CoefficientSpec,
    anchor: &[f64],
    tol_grad: f64,
) -> Result<CurvatureFields, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    if grid.is_radial() || spec.dim() != n {
        return Err(OperatorError::Unsupported("curvature needs a Cartesian grid of the coefficient dimension".into()).into());
    }
    let (grad, hess) = gradient_hessian(u);
    let a0 = spec.a_at(anchor)?;
    let s0 = a0.sqrt_spd()?;
    let m = grid.node_count();
    let (mut va, mut vb, mut v0) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut mask = vec![false; m];
    let mut max_rel: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..m {
        if !grid.is_active(i) {
            continue;
        }
        let p = grad.at(i);
        let gnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= tol_grad {
            continue;
        }
        mask[i] = true;
        let x = grid.coords(i);
        let x = &x[..n];
        let ax = spec.a_at(x)?;
        let h = hess.at(i);
        let p0 = a0.quad(p);
        // trace form
        let t = ax.mul(&h).mul(&a0).mul(&h).trace();
        let w = h.mul_vec(&a0.mul_vec(p)[..n]);
        let f1 = t - ax.quad(&w[..n]) / p0;
        // Hilbert-Schmidt form
        let sx = ax.sqrt_spd()?;
        let big = sx.mul(&h).mul(&s0);
        let nv: Vec<f64> = s0.mul_vec(p)[..n].iter().map(|v| v / p0.sqrt()).collect();
        let mn = big.mul_vec(&nv);
        let hs = big.frob2();
        let f2 = hs - mn[..n].iter().map(|v| v * v).sum::<f64>();
        // frozen coefficients
        let small = s0.mul(&h).mul(&s0);
        let mn0 = small.mul_vec(&nv);
        let f0 = small.frob2() - mn0[..n].iter().map(|v| v * v).sum::<f64>();

        if hs > 0.0 {
            max_rel = max_rel.max((f1 - f2).abs() / hs);
        }
        let r = x.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if f0 > 1e-10 * small.frob2() && r > 0.0 {
            comp = comp.max((f1 - f0).abs() / (r * f0));
        }
        va[i] = f1.max(0.0).sqrt();
        vb[i] = f2.max(0.0).sqrt();
        v0[i] = f0.max(0.0).sqrt();
    }
    Ok(CurvatureFields {
        a: ScalarField::from_values(grid, va)?,
        a_alt: ScalarField::from_values(grid, vb)?,
        a0: ScalarField::from_values(grid, v0)?,
        mask,
        max_rel_diff: max_rel,
        comparability: comp,
    })
}

/// Value, gradient and Hessian of the regularised modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiDelta {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: SmallMat,
}

/// `|z|_{A0}` above `delta`, `delta/2 + |z|²_{A0}/(2 delta)` below.
pub fn phi_delta(z: &[f64], delta: f64, a0: &SmallMat) -> Result<PhiDelta, EstimateError> {
    if !(delta > 0.0) {
        return Err(EstimateError::Parameter(format!("delta must be positive, got {delta}")));
    }
    let n = z.len();
    let az = a0.mul_vec(z);
    let r = a0.quad(z).max(0.0).sqrt();
    let mut grad = [0.0; 3];
    if r > delta {
        for k in 0..n {
            grad[k] = az[k] / r;
        }
        let hess = SmallMat::from_fn(n, |i, j| (a0.get(i, j) - az[i] * az[j] / (r * r)) / r);
        Ok(PhiDelta { value: r, grad, hess })
    } else {
        for k in 0..n {
            grad[k] = az[k] / delta;
        }
        Ok(PhiDelta {
            value: 0.5 * delta + r * r / (2.0 * delta),
            grad,
            hess: a0.scale(1.0 / delta),
        })
    }
}

/// `c_delta = phi_delta(grad u) - N . grad u` with the anchor at the origin.
pub fn c_delta(u: &ScalarField, spec: &CoefficientSpec, delta: f64) -> Result<ScalarField, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    let origin = vec![0.0; n];
    let a0 = spec.a_at(&origin)?;
    let nvec = big_n(spec, &origin)?;
    let (grad, _) = gradient_hessian(u);
    let mut vals = vec![0.0; grid.node_count()];
    for (i, v) in vals.iter_mut().enumerate() {
        if grid.is_active(i) {
            let p = grad.at(i);
            let ndot: f64 = nvec.iter().zip(p).map(|(a, b)| a * b).sum();
            *v = phi_delta(p, delta, &a0)?.value - ndot;
        }
    }
    Ok(ScalarField::from_values(grid, vals)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    #[test]
    fn paraboloid_value() {
        let g = build_grid(&DomainSpec::cube(2, -1.0, 1.0), 0.125).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1]);
        let c = curvature_a(&u, &CoefficientSpec::identity(2), &[0.0, 0.0], 1e-12).unwrap();
        for i in 0..g.node_count() {
            if c.mask[i] {
                assert!((c.a.get(i) - 2.0).abs() < 1e-9);
                assert!((c.a_alt.get(i) - 2.0).abs() < 1e-9);
            }
        }
        let origin = g.unknowns().iter().copied().find(|&i| g.coords(i)[..2] == [0.0, 0.0]).unwrap();
        assert!(!c.mask[origin]);
        assert_eq!(c.a.get(origin), 0.0);
    }

    #[test]
    fn linear_has_zero_curvature() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 0.1).unwrap();
        let u = ScalarField::from_fn(&g, |x| 2.0 * x[0] - x[1]);
        let c = curvature_a(&u, &CoefficientSpec::identity(2), &[0.0, 0.0], 1e-12).unwrap();
        assert!(c.a.max_abs() < 1e-6);
    }

    #[test]
    fn phi_delta_branches() {
        let a0 = SmallMat::identity(2);
        let d = 0.1;
        assert!((phi_delta(&[0.2, 0.0], d, &a0).unwrap().value - 0.2).abs() < 1e-15);
        assert!((phi_delta(&[0.0, 0.0], d, &a0).unwrap().value - 0.05).abs() < 1e-15);
        assert!((phi_delta(&[0.0, 0.05], d, &a0).unwrap().value - 5.0 * d / 8.0).abs() < 1e-15);
        // gradient continuous across |z| = delta
        let lo = phi_delta(&[0.1 - 1e-12, 0.0], d, &a0).unwrap();
        let hi = phi_delta(&[0.1 + 1e-12, 0.0], d, &a0).unwrap();
        assert!((lo.grad[0] - hi.grad[0]).abs() < 1e-9);
        assert!(phi_delta(&[1.0, 0.0], 0.0, &a0).is_err());
    }
}
