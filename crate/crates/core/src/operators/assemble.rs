use std::sync::Arc;

use super::{CoefficientSpec, OperatorError};
use crate::exprlang::Nonlinearity;
use crate::geometry::{Grid, NodeKind, ScalarField};
use crate::linalg::CsrMatrix;

/// Discrete operator with homogeneous Dirichlet data on every boundary node.
///
/// Rows are stored twice: as lattice stencils (usable on full fields,
/// boundary values included) and as a sparse matrix over the unknowns.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    stencils: Vec<Vec<(usize, f64)>>,
    matrix: CsrMatrix,
}

impl DiscreteOperator {
    fn from_stencils(grid: &Arc<Grid>, stencils: Vec<Vec<(usize, f64)>>) -> Self {
        let mut t = Vec::new();
        for (row, st) in stencils.iter().enumerate() {
            for &(idx, v) in st {
                if let Some(col) = grid.unknown_index(idx) {
                    t.push((row, col, v));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(grid.unknown_count(), t);
        Self {
            grid: grid.clone(),
            stencils,
            matrix,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Lattice stencil of unknown `row`.
    pub fn stencil(&self, row: usize) -> &[(usize, f64)] {
        &self.stencils[row]
    }

    /// Applies the stencils to a full field; the result lives on the
    /// unknowns and is zero elsewhere.
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let x: Vec<f64> = self.apply_values(u.values());
        ScalarField::from_unknowns(&self.grid, &x)
    }

    /// Stencils applied to lattice values; one entry per unknown.
    pub fn apply_values(&self, vals: &[f64]) -> Vec<f64> {
        self.stencils
            .iter()
            .map(|st| st.iter().map(|&(i, v)| v * vals[i]).sum())
            .collect()
    }

    /// `self + diag(d)` with `d` indexed by unknown.
    pub fn with_diagonal(&self, d: &[f64]) -> Self {
        let unknowns = self.grid.unknowns();
        let stencils = self
            .stencils
            .iter()
            .enumerate()
            .map(|(row, st)| {
                let mut st = st.clone();
                st.push((unknowns[row], d[row]));
                st
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            stencils,
            matrix: self.matrix.add_diagonal(d),
        }
    }
}

fn push(st: &mut Vec<(usize, f64)>, idx: usize, v: f64) {
    if v == 0.0 {
        return;
    }
    match st.iter_mut().find(|(i, _)| *i == idx) {
        Some(e) => e.1 += v,
        None => st.push((idx, v)),
    }
}

/// Assembles `L_h`.
///
/// Cartesian rows: central second differences, 4-point cross for mixed
/// terms, central first differences. Radial grids accept only the
/// Laplacian and use the finite-volume form of `r^{1-n} (r^{n-1} u')'`.
pub fn assemble_l(spec: &CoefficientSpec, grid: &Arc<Grid>) -> Result<DiscreteOperator, OperatorError> {
    if let Some(radii) = grid.radii() {
        if !spec.is_laplacian() {
            return Err(OperatorError::Unsupported(
                "radial grids support only A = I, b = 0".into(),
            ));
        }
        return Ok(radial(grid, radii));
    }
    let n = grid.dim();
    if spec.dim() != n {
        return Err(OperatorError::Shape {
            expected: n,
            got: spec.dim(),
        });
    }
    let h = grid.spacing();
    let (h2, h_inv2) = (h * h, 1.0 / (2.0 * h));
    let mut stencils = Vec::with_capacity(grid.unknown_count());
    for &p in grid.unknowns() {
        let x = grid.coords(p);
        let a = spec.a_at(&x)?;
        let b = spec.b_at(&x)?;
        let mut st = Vec::with_capacity(1 + 2 * n + 2 * n * n);
        let nb = |q: Option<usize>| -> Result<usize, OperatorError> {
            q.filter(|&q| grid.is_active(q))
                .ok_or(OperatorError::StencilExterior { node: p })
        };
        for i in 0..n {
            let plus = nb(grid.offset(p, i, 1))?;
            let minus = nb(grid.offset(p, i, -1))?;
            let aii = a.get(i, i);
            push(&mut st, p, -2.0 * aii / h2);
            push(&mut st, plus, aii / h2 + b[i] * h_inv2);
            push(&mut st, minus, aii / h2 - b[i] * h_inv2);
            for j in (i + 1)..n {
                let aij = a.get(i, j);
                if aij == 0.0 {
                    continue;
                }
                // 2 a_ij d_ij u with the cross stencil / (4 h^2)
                let c = 2.0 * aij / (4.0 * h2);
                for (si, sj, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    let q = nb(grid.offset(p, i, si).and_then(|q| grid.offset(q, j, sj)))?;
                    push(&mut st, q, sign * c);
                }
            }
        }
        stencils.push(st);
    }
    Ok(DiscreteOperator::from_stencils(grid, stencils))
}

fn radial(grid: &Arc<Grid>, r: &[f64]) -> DiscreteOperator {
    let n = grid.dim() as i32;
    let m = r.len();
    let mut stencils = Vec::with_capacity(grid.unknown_count());
    for &i in grid.unknowns() {
        let mut st = Vec::with_capacity(3);
        let lo = if grid.kind(i) == NodeKind::Axis { r[0] } else { 0.5 * (r[i - 1] + r[i]) };
        let hi = 0.5 * (r[i] + r[i + 1]);
        // cell volume divided by the sphere area
        let vol = (hi.powi(n) - lo.powi(n)) / n as f64;
        let fp = hi.powi(n - 1) / (r[i + 1] - r[i]) / vol;
        push(&mut st, i + 1, fp);
        push(&mut st, i, -fp);
        if grid.kind(i) != NodeKind::Axis {
            let fm = lo.powi(n - 1) / (r[i] - r[i - 1]) / vol;
            push(&mut st, i - 1, fm);
            push(&mut st, i, -fm);
        }
        debug_assert!(i + 1 < m);
        stencils.push(st);
    }
    DiscreteOperator::from_stencils(grid, stencils)
}

/// `J_u = L_h + lambda diag(f'(u))` on the unknowns.
pub fn assemble_ju(
    l: &DiscreteOperator,
    f: &Nonlinearity,
    lambda: f64,
    u: &ScalarField,
) -> Result<DiscreteOperator, OperatorError> {
    let grid = l.grid();
    let mut d = Vec::with_capacity(grid.unknown_count());
    for &i in grid.unknowns() {
        let v = f.fprime(u.get(i), lambda).map_err(|source| OperatorError::Eval {
            at: grid.coords(i)[..grid.axes()].to_vec(),
            source,
        })?;
        d.push(lambda * v);
    }
    Ok(l.with_diagonal(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    fn spec(a: &[&[&str]], b: &[&str]) -> CoefficientSpec {
        let a: Vec<Vec<&str>> = a.iter().map(|r| r.to_vec()).collect();
        CoefficientSpec::from_strings(&a, b).unwrap()
    }

    fn check_exact(s: &CoefficientSpec, u: impl Fn(&[f64]) -> f64, want: f64) {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.125).unwrap();
        let l = assemble_l(s, &g).unwrap();
        let uf = ScalarField::from_fn(&g, u);
        for v in l.apply_values(uf.values()) {
            assert!((v - want).abs() < 1e-10, "{v} vs {want}");
        }
    }

    #[test]
    fn exact_on_low_degree() {
        check_exact(&CoefficientSpec::identity(2), |x| x[0] * x[0], 2.0);
        check_exact(&spec(&[&["1", "0"], &["0", "1"]], &["1", "0"]), |x| x[0], 1.0);
        check_exact(&spec(&[&["1", "0.3"], &["0.3", "1"]], &["0", "0"]), |x| x[0] * x[1], 0.6);
    }

    #[test]
    fn laplacian_stencil() {
        let g = build_grid(&DomainSpec::cube(3, 0.0, 1.0), 0.25).unwrap();
        let l = assemble_l(&CoefficientSpec::identity(3), &g).unwrap();
        let h2 = 0.0625;
        for row in 0..g.unknown_count() {
            let st = l.stencil(row);
            assert_eq!(st.len(), 7);
            let p = g.unknowns()[row];
            for &(q, v) in st {
                let want = if q == p { -6.0 / h2 } else { 1.0 / h2 };
                assert_eq!(v, want);
            }
        }
    }

    #[test]
    fn jacobian_shifts() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.25).unwrap();
        let l = assemble_l(&CoefficientSpec::identity(2), &g).unwrap();
        let u = ScalarField::zeros(&g);
        let j = assemble_ju(&l, &Nonlinearity::zero(), 1.0, &u).unwrap();
        assert_eq!(j.matrix().triplets(), l.matrix().triplets());
        let j = assemble_ju(&l, &Nonlinearity::exp(), 1.0, &u).unwrap();
        let diff = j.matrix().diagonal();
        for (a, b) in diff.iter().zip(l.matrix().diagonal()) {
            assert_eq!(*a, b + 1.0);
        }
        let j = assemble_ju(&l, &Nonlinearity::linear(), 2.5, &u).unwrap();
        for (a, b) in j.matrix().diagonal().iter().zip(l.matrix().diagonal()) {
            assert_eq!(*a, b + 2.5);
        }
        let bad = ScalarField::from_fn(&g, |_| -2.0);
        let r = assemble_ju(&l, &Nonlinearity::custom("sqrt(u)").unwrap(), 1.0, &bad);
        assert!(matches!(r, Err(OperatorError::Eval { .. })));
    }

    #[test]
    fn radial_laplacian_on_quadratic() {
        for n in [1usize, 2, 5, 10] {
            let g = build_grid(&DomainSpec::radial(n, 1.0), 0.05).unwrap();
            let l = assemble_l(&CoefficientSpec::identity(1), &g).unwrap();
            let u = ScalarField::from_fn(&g, |x| x[0] * x[0]);
            for v in l.apply_values(u.values()) {
                // Laplacian of r^2 in R^n is 2n
                assert!((v - 2.0 * n as f64).abs() < 1e-9 * n as f64, "n={n}: {v}");
            }
        }
    }
}
