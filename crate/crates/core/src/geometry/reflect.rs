use std::sync::Arc;

use super::{build_grid, DomainSpec, GeometryError, Grid, ScalarField};

/// Weights `c_k` at the contracted points `-x_n / m_k`.
pub const REFLECTION_COEFFS: [(f64, f64); 4] = [(-10.0, 1.0), (160.0, 2.0), (-405.0, 3.0), (256.0, 4.0)];

#[derive(Debug, Clone)]
pub struct Reflection {
    pub field: ScalarField,
    /// Lattice indices (on the ball grid) where the cubic interpolation
    /// stencil had to be clamped, i.e. the value is an extrapolation.
    pub clamped: Vec<usize>,
}

/// Extends a half-ball field to the full ball by
/// `u(x', x_n) = sum_k c_k u(x', -x_n / m_k)` for `x_n < 0`, which
/// reproduces polynomials of degree <= 3 in `x_n`. Off-lattice values are
/// cubic Lagrange interpolants along the `x_n` column.
pub fn reflect_third_order(u: &ScalarField) -> Result<Reflection, GeometryError> {
    let src = u.grid();
    let DomainSpec::HalfBall { dim, radius } = *src.domain() else {
        return Err(GeometryError::NotHalfBall);
    };
    let h = src.spacing();
    let dst: Arc<Grid> = build_grid(&DomainSpec::ball(dim, radius), h)?;
    let n = dim;
    let mut values = vec![0.0; dst.node_count()];
    let mut clamped = Vec::new();
    let mut dm = [0usize; 3];
    let mut sm = [0usize; 3];
    // The ball lattice has m + 1 extra layers below x_n = 0.
    let shift = dst.shape()[n - 1] - src.shape()[n - 1];
    for i in 0..dst.node_count() {
        if !dst.is_active(i) {
            continue;
        }
        dst.multi_into(i, &mut dm);
        let xn = dm[n - 1] as isize - shift as isize;
        sm[..n].copy_from_slice(&dm[..n]);
        if xn >= 0 {
            sm[n - 1] = xn as usize;
            let j = src.index_of(&sm[..n]);
            values[i] = u.get(j);
            continue;
        }
        // column of the source lattice above x'
        sm[n - 1] = 0;
        let base = src.index_of(&sm[..n]);
        let stride = src.strides()[n - 1];
        let len = src.shape()[n - 1];
        let top = (0..len)
            .take_while(|&k| src.is_active(base + k * stride))
            .count();
        let col = |k: usize| u.get(base + k * stride);
        let depth = (-xn) as f64;
        let mut acc = 0.0;
        let mut was_clamped = false;
        for (c, m) in REFLECTION_COEFFS {
            let s = depth / m;
            let (v, cl) = interp_cubic(&col, top, s);
            was_clamped |= cl;
            acc += c * v;
        }
        if was_clamped {
            clamped.push(i);
        }
        values[i] = acc;
    }
    let field = ScalarField::from_values(&dst, values).map_err(|e| GeometryError::InvalidDomain(e.to_string()))?;
    Ok(Reflection { field, clamped })
}

/// Cubic Lagrange interpolation at `s` (in lattice units) from samples
/// `col(0..top)`. Returns the value and whether the stencil was clamped.
fn interp_cubic(col: &dyn Fn(usize) -> f64, top: usize, s: f64) -> (f64, bool) {
    if s.fract() == 0.0 && (s as usize) < top {
        return (col(s as usize), false);
    }
    if top < 4 {
        // Not enough points; fall back to the highest available order.
        let k = top.min(4);
        if k == 0 {
            return (0.0, true);
        }
        return (lagrange(col, 0, k, s), true);
    }
    let j0 = (s.floor() as isize - 1).clamp(0, top as isize - 4) as usize;
    let clamped = s < j0 as f64 || s > (j0 + 3) as f64;
    (lagrange(col, j0, 4, s), clamped)
}

fn lagrange(col: &dyn Fn(usize) -> f64, j0: usize, k: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..k {
        let xa = (j0 + a) as f64;
        let mut l = 1.0;
        for b in 0..k {
            if b != a {
                let xb = (j0 + b) as f64;
                l *= (s - xb) / (xa - xb);
            }
        }
        acc += l * col(j0 + a);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(f: impl Fn(f64) -> f64 + Copy, tol: f64) {
        let hb = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 32.0).unwrap();
        let u = ScalarField::from_fn(&hb, |x| f(x[1]));
        let r = reflect_third_order(&u).unwrap();
        let g = r.field.grid();
        for i in 0..g.node_count() {
            if g.is_active(i) && !r.clamped.contains(&i) {
                let x = g.coords(i);
                assert!((r.field.get(i) - f(x[1])).abs() <= tol, "{:?} {}", x, r.field.get(i));
            }
        }
    }

    #[test]
    fn moment_identities() {
        for j in 0..4 {
            let s: f64 = REFLECTION_COEFFS.iter().map(|(c, m)| c * (-1.0 / m).powi(j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_cubics() {
        check(|_| 1.0, 1e-10);
        check(|t| t, 1e-10);
        check(|t| t * t * t, 1e-10);
        check(|t| 2.0 - t + 3.0 * t * t - t * t * t, 1e-10);
    }

    #[test]
    fn linear_value_below_flat_boundary() {
        let hb = build_grid(&DomainSpec::half_ball(2, 1.0), 0.125).unwrap();
        let u = ScalarField::from_fn(&hb, |x| x[1]);
        let r = reflect_third_order(&u).unwrap();
        let g = r.field.grid();
        let i = (0..g.node_count())
            .find(|&i| {
                let x = g.coords(i);
                x[0] == 0.0 && x[1] == -0.125
            })
            .unwrap();
        assert!((r.field.get(i) + 0.125).abs() < 1e-12);
    }
}
