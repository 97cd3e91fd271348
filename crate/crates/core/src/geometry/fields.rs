use std::sync::Arc;

use thiserror::Error;

use super::Grid;
use crate::linalg::SmallMat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
}

/// One real per lattice node; exterior nodes hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f` at every active node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.axes();
        let values = (0..grid.node_count())
            .map(|i| if grid.is_active(i) { f(&grid.coords(i)[..n]) } else { 0.0 })
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Validated construction from lattice values; exterior entries are zeroed.
    pub fn from_values(grid: &Arc<Grid>, mut values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.node_count() {
            return Err(FieldError::Length {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !grid.is_active(i) {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(FieldError::NonFinite(i));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Field from values at the unknowns; boundary nodes get `boundary`.
    pub fn from_unknowns(grid: &Arc<Grid>, x: &[f64]) -> Self {
        assert_eq!(x.len(), grid.unknown_count());
        let mut values = vec![0.0; grid.node_count()];
        for (k, &i) in grid.unknowns().iter().enumerate() {
            values[i] = x[k];
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn unknown_values(&self) -> Vec<f64> {
        self.grid.unknowns().iter().map(|&i| self.values[i]).collect()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.grid.is_active(i) { f(v) } else { 0.0 })
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self, FieldError> {
        if !self.grid.same_as(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (&a, &b))| if self.grid.is_active(i) { f(a, b) } else { 0.0 })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.grid.is_active(i))
            .map(|i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.grid.is_active(i))
            .map(|i| self.values[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `n` reals per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    grid: Arc<Grid>,
    n: usize,
    data: Vec<f64>,
}

impl VecField {
    pub fn zeros(grid: &Arc<Grid>, n: usize) -> Self {
        Self {
            grid: grid.clone(),
            n,
            data: vec![0.0; n * grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, n: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut v = Self::zeros(grid, n);
        let axes = grid.axes();
        for i in 0..grid.node_count() {
            if grid.is_active(i) {
                let x = grid.coords(i);
                f(&x[..axes], &mut v.data[i * n..(i + 1) * n]);
            }
        }
        v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.n..(idx + 1) * self.n]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.data[idx * self.n..(idx + 1) * self.n]
    }

    pub fn component(&self, k: usize) -> ScalarField {
        let values = (0..self.grid.node_count()).map(|i| self.data[i * self.n + k]).collect();
        ScalarField::from_values(&self.grid, values).expect("finite components")
    }

    /// Euclidean norm per node.
    pub fn norm(&self) -> ScalarField {
        let values = (0..self.grid.node_count())
            .map(|i| self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        ScalarField::from_values(&self.grid, values).expect("finite norms")
    }
}

/// Symmetric `n x n` matrix per node, upper triangle stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct MatField {
    grid: Arc<Grid>,
    n: usize,
    data: Vec<f64>,
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn tri_pos(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl MatField {
    pub fn zeros(grid: &Arc<Grid>, n: usize) -> Self {
        Self {
            grid: grid.clone(),
            n,
            data: vec![0.0; tri_len(n) * grid.node_count()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn entry(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.data[idx * tri_len(self.n) + tri_pos(self.n, i, j)]
    }

    pub fn set(&mut self, idx: usize, i: usize, j: usize, v: f64) {
        let p = idx * tri_len(self.n) + tri_pos(self.n, i, j);
        self.data[p] = v;
    }

    pub fn at(&self, idx: usize) -> SmallMat {
        SmallMat::from_fn(self.n, |i, j| self.entry(idx, i, j))
    }

    pub fn set_mat(&mut self, idx: usize, m: &SmallMat) {
        for i in 0..self.n {
            for j in i..self.n {
                self.set(idx, i, j, m.get(i, j));
            }
        }
    }

    /// Hilbert-Schmidt norm per node.
    pub fn frobenius(&self) -> ScalarField {
        let values = (0..self.grid.node_count()).map(|i| self.at(i).frob2().sqrt()).collect();
        ScalarField::from_values(&self.grid, values).expect("finite norms")
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_grid, DomainSpec};
    use super::*;

    #[test]
    fn matfield_is_symmetric_by_storage() {
        let g = build_grid(&DomainSpec::cube(3, 0.0, 1.0), 0.5).unwrap();
        let mut m = MatField::zeros(&g, 3);
        m.set(4, 0, 2, 7.0);
        assert_eq!(m.entry(4, 2, 0), 7.0);
        assert_eq!(m.at(4).get(2, 0), 7.0);
        assert_eq!(m.data.len(), 6 * g.node_count());
    }

    #[test]
    fn exterior_stays_zero() {
        let g = build_grid(&DomainSpec::ball(2, 1.0), 0.25).unwrap();
        let f = ScalarField::from_fn(&g, |_| 3.0);
        for i in 0..g.node_count() {
            assert_eq!(f.get(i), if g.is_active(i) { 3.0 } else { 0.0 });
        }
        assert!(ScalarField::from_values(&g, vec![f64::NAN; g.node_count()]).is_err());
    }
}
