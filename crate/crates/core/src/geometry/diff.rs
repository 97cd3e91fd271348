use super::{Grid, MatField, ScalarField, VecField};

/// Values `u(p + k e_axis)` for `k = 1..=3` (or `-1..=-3` when `dir < 0`),
/// stopping at the first inactive node.
fn ray(grid: &Grid, vals: &[f64], p: usize, axis: usize, dir: isize) -> ([f64; 3], usize) {
    let mut out = [0.0; 3];
    let mut cur = p;
    for k in 0..3 {
        match grid.active_offset(cur, axis, dir) {
            Some(q) => {
                out[k] = vals[q];
                cur = q;
            }
            None => return (out, k),
        }
    }
    (out, 3)
}

fn first(grid: &Grid, vals: &[f64], p: usize, axis: usize, h: f64) -> f64 {
    let u0 = vals[p];
    let (fw, nf) = ray(grid, vals, p, axis, 1);
    let (bw, nb) = ray(grid, vals, p, axis, -1);
    if nf >= 1 && nb >= 1 {
        (fw[0] - bw[0]) / (2.0 * h)
    } else if nf >= 2 {
        (-3.0 * u0 + 4.0 * fw[0] - fw[1]) / (2.0 * h)
    } else if nb >= 2 {
        (3.0 * u0 - 4.0 * bw[0] + bw[1]) / (2.0 * h)
    } else if nf == 1 {
        (fw[0] - u0) / h
    } else if nb == 1 {
        (u0 - bw[0]) / h
    } else {
        0.0
    }
}

fn second(grid: &Grid, vals: &[f64], p: usize, axis: usize, h: f64) -> f64 {
    let u0 = vals[p];
    let (fw, nf) = ray(grid, vals, p, axis, 1);
    let (bw, nb) = ray(grid, vals, p, axis, -1);
    let h2 = h * h;
    if nf >= 1 && nb >= 1 {
        (fw[0] - 2.0 * u0 + bw[0]) / h2
    } else {
        let (r, k) = if nf >= nb { (fw, nf) } else { (bw, nb) };
        match k {
            3 => (2.0 * u0 - 5.0 * r[0] + 4.0 * r[1] - r[2]) / h2,
            2 => (u0 - 2.0 * r[0] + r[1]) / h2,
            _ => 0.0,
        }
    }
}

/// Finite-difference gradient and Hessian at every active node.
///
/// Central differences where both neighbours are active, second-order
/// one-sided formulas otherwise. Mixed derivatives use the 4-point cross
/// when all diagonal neighbours are active and fall back to symmetrised
/// differences of the gradient. Radial grids return `u_r` and `u_rr`
/// (one component each).
pub fn gradient_hessian(u: &ScalarField) -> (VecField, MatField) {
    let grid = u.grid();
    if let Some(radii) = grid.radii() {
        return radial(u, radii);
    }
    let n = grid.dim();
    let h = grid.spacing();
    let vals = u.values();
    let mut grad = VecField::zeros(grid, n);
    let mut hess = MatField::zeros(grid, n);
    for p in 0..grid.node_count() {
        if !grid.is_active(p) {
            continue;
        }
        let g = grad.at_mut(p);
        for (a, ga) in g.iter_mut().enumerate() {
            *ga = first(grid, vals, p, a, h);
        }
        for a in 0..n {
            hess.set(p, a, a, second(grid, vals, p, a, h));
        }
    }
    // Gradient components as plain lattice arrays for the fallback.
    let comps: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..grid.node_count()).map(|p| grad.at(p)[k]).collect())
        .collect();
    for p in 0..grid.node_count() {
        if !grid.is_active(p) {
            continue;
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let cross = (|| {
                    let pp = grid.active_offset(grid.offset(p, a, 1)?, b, 1)?;
                    let pm = grid.active_offset(grid.offset(p, a, 1)?, b, -1)?;
                    let mp = grid.active_offset(grid.offset(p, a, -1)?, b, 1)?;
                    let mm = grid.active_offset(grid.offset(p, a, -1)?, b, -1)?;
                    Some((vals[pp] - vals[pm] - vals[mp] + vals[mm]) / (4.0 * h * h))
                })();
                let v = cross.unwrap_or_else(|| {
                    0.5 * (first(grid, &comps[a], p, b, h) + first(grid, &comps[b], p, a, h))
                });
                hess.set(p, a, b, v);
            }
        }
    }
    (grad, hess)
}

fn radial(u: &ScalarField, r: &[f64]) -> (VecField, MatField) {
    let grid = u.grid();
    let m = r.len();
    let v = u.values();
    let mut grad = VecField::zeros(grid, 1);
    let mut hess = MatField::zeros(grid, 1);
    // Three-point Lagrange derivatives on the (possibly uneven) radii.
    let lagrange = |i0: usize, x: f64| -> (f64, f64) {
        let (x0, x1, x2) = (r[i0], r[i0 + 1], r[i0 + 2]);
        let (f0, f1, f2) = (v[i0], v[i0 + 1], v[i0 + 2]);
        let d0 = (x0 - x1) * (x0 - x2);
        let d1 = (x1 - x0) * (x1 - x2);
        let d2 = (x2 - x0) * (x2 - x1);
        let first = f0 * (2.0 * x - x1 - x2) / d0 + f1 * (2.0 * x - x0 - x2) / d1 + f2 * (2.0 * x - x0 - x1) / d2;
        let second = 2.0 * (f0 / d0 + f1 / d1 + f2 / d2);
        (first, second)
    };
    for i in 0..m {
        let (d1, d2) = if i == 0 && r[0] == 0.0 {
            // symmetric extension u(-r) = u(r)
            (0.0, 2.0 * (v[1] - v[0]) / (r[1] * r[1]))
        } else {
            let i0 = i.saturating_sub(1).min(m - 3);
            lagrange(i0, r[i])
        };
        grad.at_mut(i)[0] = d1;
        hess.set(i, 0, 0, d2);
    }
    (grad, hess)
}

#[cfg(test)]
mod tests {
    use super::super::{build_grid, DomainSpec};
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exact_on_quadratics() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 16.0).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0] * x[0]);
        let (grad, hess) = gradient_hessian(&u);
        for p in 0..g.node_count() {
            if g.is_active(p) {
                assert!((hess.entry(p, 0, 0) - 2.0).abs() < 1e-9);
                assert!(hess.entry(p, 1, 1).abs() < 1e-9);
                assert!(hess.entry(p, 0, 1).abs() < 1e-9);
                assert!((grad.at(p)[0] - 2.0 * g.coords(p)[0]).abs() < 1e-12);
            }
        }
        let u = ScalarField::from_fn(&g, |x| x[0] * x[1]);
        let (_, hess) = gradient_hessian(&u);
        for &p in g.unknowns() {
            assert!((hess.entry(p, 0, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_convergence() {
        let mut errs = Vec::new();
        for k in [16, 32, 64] {
            let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 1.0 / k as f64).unwrap();
            let u = ScalarField::from_fn(&g, |x| (PI * x[0]).sin());
            let (_, hess) = gradient_hessian(&u);
            let e = (0..g.node_count())
                .map(|p| {
                    let x = g.coords(p);
                    (hess.entry(p, 0, 0) + PI * PI * (PI * x[0]).sin()).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "{errs:?}");
        }
    }

    #[test]
    fn radial_derivatives() {
        let g = build_grid(&DomainSpec::radial(3, 1.0), 0.01).unwrap();
        let u = ScalarField::from_fn(&g, |x| 1.0 - x[0] * x[0]);
        let (grad, hess) = gradient_hessian(&u);
        for i in 0..g.node_count() {
            let r = g.coords(i)[0];
            assert!((grad.at(i)[0] + 2.0 * r).abs() < 1e-10);
            assert!((hess.entry(i, 0, 0) + 2.0).abs() < 1e-8);
        }
    }
}
