use crate::geometry::{gradient_hessian, DomainSpec, Quadrature, Region, ScalarField};

use super::{EstimateError, EstimateReport, ReportEntry};

pub const DELTA_SWEEP: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Both cube interpolation inequalities over [`DELTA_SWEEP`]; each entry
/// keeps the worst `lhs / rhs` and passes iff `lhs <= c_test * rhs` at
/// every `delta`.
pub fn interpolation_props(u: &ScalarField, c_test: f64) -> Result<EstimateReport, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    match grid.domain() {
        DomainSpec::Box { lo, hi } if lo.iter().all(|v| *v == 0.0) && hi.iter().all(|v| *v == 1.0) => {}
        _ => return Err(EstimateError::Parameter("interpolation needs the unit cube".into())),
    }
    let (grad, hess) = gradient_hessian(u);
    let q = Quadrature::volume(grid, &Region::Whole)?;
    let g2 = q.integrate_with(|i| grad.at(i).iter().map(|v| v * v).sum::<f64>());
    let gh = q.integrate_with(|i| grad.at(i).iter().map(|v| v * v).sum::<f64>().sqrt() * hess.at(i).frob2().sqrt());
    let u2 = q.integrate_with(|i| u.get(i).powi(2));
    let u1 = q.integrate_with(|i| u.get(i).abs());

    let worst = |lhs: f64, rhs: &dyn Fn(f64) -> f64, check: &str, anchor: &str| {
        let mut best: Option<(f64, f64)> = None;
        for d in DELTA_SWEEP {
            let r = rhs(d);
            let ratio = if r > 0.0 { lhs / r } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
            if best.map_or(true, |(_, b)| ratio > b) {
                best = Some((d, ratio));
            }
        }
        let (d, _) = best.expect("non-empty sweep");
        ReportEntry::new(check, anchor, lhs, rhs(d), lhs.max(rhs(d)))
            .param("delta", d)
            .param("c_test", c_test)
            .with_threshold(c_test)
    };
    let mut rep = EstimateReport::default();
    rep.push(worst(g2, &|d| d * gh + u2 / (d * d), "propA1.interp", "interpol"));
    rep.push(worst(u2, &|d| d * d * g2 + d.powi(-(n as i32)) * u1 * u1, "propA2.nash", "nash"));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn sine_product_and_constants() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 1.0 / 64.0).unwrap();
        let s = ScalarField::from_fn(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let rep = interpolation_props(&s, 100.0).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let rep = interpolation_props(&one, 100.0).unwrap();
        assert!(rep.entries[0].lhs.abs() < 1e-20);
        let zero = ScalarField::zeros(&g);
        let rep = interpolation_props(&zero, 100.0).unwrap();
        assert!(rep.entries.iter().all(|e| e.lhs == 0.0 && e.rhs == 0.0 && e.pass));
    }
}
