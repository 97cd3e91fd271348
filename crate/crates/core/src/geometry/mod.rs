//! Lattices over half-balls, balls, boxes and radial intervals.
//!
//! Cartesian grids (dimension 1 to 3) use a uniform lattice that extends one
//! layer past the domain. Every lattice node is classified; fields store one
//! value per lattice node and keep exterior values at zero. Radial grids
//! store node radii `r_0 < ... < r_M` for dimensions up to 15.

mod covering;
mod diff;
mod fields;
mod quadrature;
mod reflect;

use std::sync::Arc;

use thiserror::Error;

pub use covering::{make_covering, CoverElement, CoverShape, CoverTag, Covering, CoveringMode};
pub use diff::gradient_hessian;
pub use fields::{FieldError, MatField, ScalarField, VecField};
pub use quadrature::{
    levelset_surface_integral, surface_integral_flat, volume_integral, LevelSetOptions, Quadrature,
    Region,
};
pub use reflect::{reflect_third_order, Reflection};

pub const MAX_CARTESIAN_DIM: usize = 3;
pub const MAX_RADIAL_DIM: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("spacing {h} does not divide the extent {extent}")]
    Spacing { h: f64, extent: f64 },
    #[error("grid too coarse: no interior nodes")]
    TooCoarse,
    #[error("unsupported dimension {0}")]
    UnsupportedDim(usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("region does not meet the grid domain")]
    EmptyRegion,
    #[error("operation requires a half-ball grid")]
    NotHalfBall,
    #[error("operation requires a Cartesian grid")]
    NotCartesian,
    #[error("degenerate level set: {fraction:.3} of the band is near-critical")]
    DegenerateLevelSet { fraction: f64 },
    #[error("covering: {0}")]
    Covering(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// `B_rho ∩ {x_n > 0}`, flat boundary on `x_n = 0`.
    HalfBall { dim: usize, radius: f64 },
    Ball { dim: usize, radius: f64 },
    /// Product of intervals `lo[i] .. hi[i]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Radially symmetric ball of radius `radius` in dimension `dim`,
    /// discretised in `r` only.
    Radial { dim: usize, radius: f64 },
}

impl DomainSpec {
    pub fn half_ball(dim: usize, radius: f64) -> Self {
        DomainSpec::HalfBall { dim, radius }
    }
    pub fn ball(dim: usize, radius: f64) -> Self {
        DomainSpec::Ball { dim, radius }
    }
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        DomainSpec::Box {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }
    pub fn radial(dim: usize, radius: f64) -> Self {
        DomainSpec::Radial { dim, radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::HalfBall { dim, .. }
            | DomainSpec::Ball { dim, .. }
            | DomainSpec::Radial { dim, .. } => *dim,
            DomainSpec::Box { lo, .. } => lo.len(),
        }
    }

    /// Open-set membership for Cartesian domains.
    pub(crate) fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::HalfBall { radius, .. } => {
                let n = x.len();
                x[n - 1] > 0.0 && norm2(x) < radius * radius
            }
            DomainSpec::Ball { radius, .. } => norm2(x) < radius * radius,
            DomainSpec::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b),
            DomainSpec::Radial { radius, .. } => x[0].abs() < *radius,
        }
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// On `{x_n = 0}` with `|x'| < rho` (half-ball grids only).
    FlatBoundary,
    /// Any other Dirichlet node: lattice neighbours (diagonals included) of
    /// the interior outside the open domain, box faces, radial end points.
    CurvedBoundary,
    /// Centre `r = 0` of a radial grid; an unknown, not a boundary.
    Axis,
    Exterior,
}

impl NodeKind {
    pub fn is_active(self) -> bool {
        self != NodeKind::Exterior
    }
    pub fn is_unknown(self) -> bool {
        matches!(self, NodeKind::Interior | NodeKind::Axis)
    }
    pub fn is_boundary(self) -> bool {
        matches!(self, NodeKind::FlatBoundary | NodeKind::CurvedBoundary)
    }
}

/// Classified lattice. Immutable; shared through `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    dim: usize,
    h: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    /// Per axis `(base, k0)`: lattice index `k` sits at `base + (k - k0) h`.
    origin: Vec<(f64, isize)>,
    kinds: Vec<NodeKind>,
    unknown_of: Vec<usize>,
    unknowns: Vec<usize>,
    radii: Option<Vec<f64>>,
}

const NONE: usize = usize::MAX;

fn steps(extent: f64, h: f64) -> Result<usize, GeometryError> {
    if !(h > 0.0) || !(extent > 0.0) {
        return Err(GeometryError::Spacing { h, extent });
    }
    let m = (extent / h).round();
    if m < 1.0 || (m * h - extent).abs() > 1e-9 * extent.max(1.0) {
        return Err(GeometryError::Spacing { h, extent });
    }
    Ok(m as usize)
}

/// Builds and classifies the lattice for `domain` with spacing `h`.
pub fn build_grid(domain: &DomainSpec, h: f64) -> Result<Arc<Grid>, GeometryError> {
    let n = domain.dim();
    match domain {
        DomainSpec::Radial { dim, radius } => {
            if *dim < 1 || *dim > MAX_RADIAL_DIM {
                return Err(GeometryError::UnsupportedDim(*dim));
            }
            let m = steps(*radius, h)?;
            let radii: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
            Grid::radial_from_radii(*dim, radii, true, h)
        }
        _ => {
            if n < 1 || n > MAX_CARTESIAN_DIM {
                return Err(GeometryError::UnsupportedDim(n));
            }
            let (shape, origin) = match domain {
                DomainSpec::HalfBall { radius, .. } | DomainSpec::Ball { radius, .. } => {
                    let m = steps(*radius, h)?;
                    let half = matches!(domain, DomainSpec::HalfBall { .. });
                    let mut shape = vec![2 * m + 3; n];
                    let mut origin = vec![(0.0, m as isize + 1); n];
                    if half {
                        shape[n - 1] = m + 2;
                        origin[n - 1] = (0.0, 0);
                    }
                    (shape, origin)
                }
                DomainSpec::Box { lo, hi } => {
                    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                        return Err(GeometryError::InvalidDomain("box bounds".into()));
                    }
                    let mut shape = Vec::with_capacity(n);
                    for (a, b) in lo.iter().zip(hi) {
                        shape.push(steps(b - a, h)? + 1);
                    }
                    (shape, lo.iter().map(|&a| (a, 0)).collect())
                }
                DomainSpec::Radial { .. } => unreachable!(),
            };
            Grid::cartesian(domain.clone(), h, shape, origin)
        }
    }
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl Grid {
    fn cartesian(
        domain: DomainSpec,
        h: f64,
        shape: Vec<usize>,
        origin: Vec<(f64, isize)>,
    ) -> Result<Arc<Grid>, GeometryError> {
        let n = shape.len();
        let total: usize = shape.iter().product();
        let strides = strides_of(&shape);
        let mut g = Grid {
            domain,
            dim: n,
            h,
            shape,
            strides,
            origin,
            kinds: vec![NodeKind::Exterior; total],
            unknown_of: vec![NONE; total],
            unknowns: Vec::new(),
            radii: None,
        };
        let is_box = matches!(g.domain, DomainSpec::Box { .. });
        let mut x = [0.0; 3];
        for idx in 0..total {
            g.coords_into(idx, &mut x);
            if g.domain.contains(&x[..n]) {
                g.kinds[idx] = NodeKind::Interior;
            } else if is_box {
                g.kinds[idx] = NodeKind::CurvedBoundary;
            }
        }
        if !g.kinds.contains(&NodeKind::Interior) {
            return Err(GeometryError::TooCoarse);
        }
        if !is_box {
            let rho = match g.domain {
                DomainSpec::HalfBall { radius, .. } | DomainSpec::Ball { radius, .. } => radius,
                _ => unreachable!(),
            };
            let half = matches!(g.domain, DomainSpec::HalfBall { .. });
            let tol = 1e-12 * rho;
            let mut idx_buf = [0usize; 3];
            for idx in 0..total {
                if g.kinds[idx] == NodeKind::Interior {
                    continue;
                }
                g.coords_into(idx, &mut x);
                g.multi_into(idx, &mut idx_buf);
                if half && idx_buf[n - 1] == 0 && norm2(&x[..n - 1]) < (rho - tol) * (rho - tol) {
                    g.kinds[idx] = NodeKind::FlatBoundary;
                } else if g.touches_interior(&idx_buf[..n]) {
                    g.kinds[idx] = NodeKind::CurvedBoundary;
                }
            }
        }
        g.number_unknowns();
        Ok(Arc::new(g))
    }

    /// Radial grid on explicit node radii. With `axis`, `radii[0]` must be 0
    /// and is an unknown; otherwise it carries a Dirichlet condition.
    pub fn radial_from_radii(
        dim: usize,
        radii: Vec<f64>,
        axis: bool,
        h: f64,
    ) -> Result<Arc<Grid>, GeometryError> {
        if dim < 1 || dim > MAX_RADIAL_DIM {
            return Err(GeometryError::UnsupportedDim(dim));
        }
        if radii.len() < 3 || radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] < 0.0 {
            return Err(GeometryError::InvalidDomain("radii must increase".into()));
        }
        if axis && radii[0] != 0.0 {
            return Err(GeometryError::InvalidDomain("axis node must sit at r = 0".into()));
        }
        let m = radii.len();
        let mut kinds = vec![NodeKind::Interior; m];
        kinds[0] = if axis { NodeKind::Axis } else { NodeKind::CurvedBoundary };
        kinds[m - 1] = NodeKind::CurvedBoundary;
        let radius = radii[m - 1];
        let mut g = Grid {
            domain: DomainSpec::Radial { dim, radius },
            dim,
            h,
            shape: vec![m],
            strides: vec![1],
            origin: vec![(0.0, 0)],
            kinds,
            unknown_of: vec![NONE; m],
            unknowns: Vec::new(),
            radii: Some(radii),
        };
        g.number_unknowns();
        Ok(Arc::new(g))
    }

    /// Geometric radial grid on `(r_min, radius)` with `cells` cells, both
    /// ends Dirichlet.
    pub fn radial_geometric(
        dim: usize,
        r_min: f64,
        radius: f64,
        cells: usize,
    ) -> Result<Arc<Grid>, GeometryError> {
        if !(r_min > 0.0 && r_min < radius) || cells < 2 {
            return Err(GeometryError::InvalidDomain("geometric radial grid".into()));
        }
        let q = (radius / r_min).ln() / cells as f64;
        let radii: Vec<f64> = (0..=cells)
            .map(|i| if i == cells { radius } else { r_min * (q * i as f64).exp() })
            .collect();
        Self::radial_from_radii(dim, radii, false, q)
    }

    fn number_unknowns(&mut self) {
        for (idx, k) in self.kinds.iter().enumerate() {
            if k.is_unknown() {
                self.unknown_of[idx] = self.unknowns.len();
                self.unknowns.push(idx);
            }
        }
    }

    fn touches_interior(&self, multi: &[usize]) -> bool {
        let n = self.shape.len();
        let count = 3usize.pow(n as u32);
        'outer: for code in 0..count {
            let mut c = code;
            let mut idx = 0usize;
            for k in 0..n {
                let off = (c % 3) as isize - 1;
                c /= 3;
                let v = multi[k] as isize + off;
                if v < 0 || v >= self.shape[k] as isize {
                    continue 'outer;
                }
                idx += v as usize * self.strides[k];
            }
            if self.kinds[idx] == NodeKind::Interior {
                return true;
            }
        }
        false
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Spatial dimension `n` (also for radial grids).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of lattice axes: `n` for Cartesian grids, 1 for radial ones.
    pub fn axes(&self) -> usize {
        self.shape.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_radial(&self) -> bool {
        self.radii.is_some()
    }

    pub fn is_half_ball(&self) -> bool {
        matches!(self.domain, DomainSpec::HalfBall { .. })
    }

    pub fn radii(&self) -> Option<&[f64]> {
        self.radii.as_deref()
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.kinds[idx].is_active()
    }

    pub fn interior_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == NodeKind::Interior).count()
    }

    /// Lattice indices of the unknowns, in unknown order.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    pub fn unknown_index(&self, idx: usize) -> Option<usize> {
        let u = self.unknown_of[idx];
        (u != NONE).then_some(u)
    }

    pub fn multi_into(&self, mut idx: usize, out: &mut [usize]) {
        for k in 0..self.shape.len() {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(m, s)| m * s).sum()
    }

    /// Coordinates of a node (for radial grids, `[r, 0, 0]`).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        self.coords_into(idx, &mut x);
        x
    }

    fn coords_into(&self, idx: usize, x: &mut [f64; 3]) {
        if let Some(r) = &self.radii {
            x[0] = r[idx];
            return;
        }
        let mut rem = idx;
        for k in 0..self.shape.len() {
            let m = rem / self.strides[k];
            rem %= self.strides[k];
            let (base, k0) = self.origin[k];
            x[k] = base + (m as isize - k0) as f64 * self.h;
        }
    }

    /// Lattice neighbour `idx + off * e_axis`, if inside the lattice.
    pub fn offset(&self, idx: usize, axis: usize, off: isize) -> Option<usize> {
        let m = (idx / self.strides[axis]) % self.shape[axis];
        let v = m as isize + off;
        if v < 0 || v >= self.shape[axis] as isize {
            return None;
        }
        Some((idx as isize + off * self.strides[axis] as isize) as usize)
    }

    /// Like [`Grid::offset`] but only returns active (non-exterior) nodes.
    pub fn active_offset(&self, idx: usize, axis: usize, off: isize) -> Option<usize> {
        self.offset(idx, axis, off).filter(|&j| self.is_active(j))
    }

    /// Radius of the ball / half-ball / radial domain.
    pub fn radius(&self) -> Option<f64> {
        match self.domain {
            DomainSpec::HalfBall { radius, .. }
            | DomainSpec::Ball { radius, .. }
            | DomainSpec::Radial { radius, .. } => Some(radius),
            DomainSpec::Box { .. } => None,
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_ball_coarse_flat_nodes() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 0.5).unwrap();
        let mut flat: Vec<[f64; 3]> = (0..g.node_count())
            .filter(|&i| g.kind(i) == NodeKind::FlatBoundary)
            .map(|i| g.coords(i))
            .collect();
        flat.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let xs: Vec<(f64, f64)> = flat.iter().map(|x| (x[0], x[1])).collect();
        assert_eq!(xs, vec![(-0.5, 0.0), (0.0, 0.0), (0.5, 0.0)]);
        assert_eq!(g.interior_count(), 3);
        // rim nodes are Dirichlet but not flat
        let rim = (0..g.node_count()).find(|&i| {
            let x = g.coords(i);
            x[0] == 1.0 && x[1] == 0.0
        });
        assert_eq!(g.kind(rim.unwrap()), NodeKind::CurvedBoundary);
    }

    #[test]
    fn box_single_interior() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.5).unwrap();
        assert_eq!(g.interior_count(), 1);
        let i = g.unknowns()[0];
        assert_eq!(&g.coords(i)[..2], &[0.5, 0.5]);
        assert_eq!(g.node_count(), 9);
    }

    #[test]
    fn radial_counts() {
        let g = build_grid(&DomainSpec::radial(10, 1.0), 0.01).unwrap();
        assert_eq!(g.interior_count(), 99);
        assert_eq!(g.kind(0), NodeKind::Axis);
        assert_eq!(g.unknown_count(), 100);
    }

    #[test]
    fn errors() {
        assert_eq!(
            build_grid(&DomainSpec::cube(4, 0.0, 1.0), 0.5).unwrap_err(),
            GeometryError::UnsupportedDim(4)
        );
        assert!(matches!(
            build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.3),
            Err(GeometryError::Spacing { .. })
        ));
        assert_eq!(
            build_grid(&DomainSpec::cube(2, 0.0, 1.0), 1.0).unwrap_err(),
            GeometryError::TooCoarse
        );
        assert_eq!(
            build_grid(&DomainSpec::half_ball(2, 1.0), 1.0).unwrap_err(),
            GeometryError::TooCoarse
        );
    }

    #[test]
    fn interior_neighbours_are_active() {
        for dom in [
            DomainSpec::half_ball(2, 1.0),
            DomainSpec::ball(3, 1.0),
            DomainSpec::half_ball(3, 0.5),
            DomainSpec::half_ball(1, 1.0),
        ] {
            let g = build_grid(&dom, 1.0 / 16.0).unwrap();
            for &i in g.unknowns() {
                for a in 0..g.axes() {
                    for s in [-1, 1] {
                        let j = g.offset(i, a, s).expect("in lattice");
                        assert!(g.is_active(j));
                    }
                }
            }
            for i in 0..g.node_count() {
                if g.kind(i) == NodeKind::FlatBoundary {
                    assert_eq!(g.coords(i)[g.dim() - 1], 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = build_grid(&DomainSpec::ball(2, 1.0), 0.1).unwrap();
        let b = build_grid(&DomainSpec::ball(2, 1.0), 0.1).unwrap();
        assert_eq!(a, b);
    }
}
