use super::{gradient_hessian, norm2, DomainSpec, GeometryError, Grid, ScalarField};

/// Integration region, always intersected with the grid domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Whole,
    /// `B_radius(center)`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    /// Ball of radius `r` about the origin.
    pub fn centered(dim: usize, r: f64) -> Self {
        Region::Ball {
            center: vec![0.0; dim],
            radius: r,
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center, radius } => {
                let d: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d < radius * radius
            }
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b),
        }
    }

    /// True when the closed cell `[c - h/2, c + h/2]` cannot meet the region.
    fn misses_cell(&self, c: &[f64], h: f64) -> bool {
        match self {
            Region::Whole => false,
            Region::Ball { center, radius } => cell_ball_distance2(c, h, center) >= radius * radius,
            Region::Box { lo, hi } => c
                .iter()
                .zip(lo.iter().zip(hi))
                .any(|(v, (a, b))| v + 0.5 * h <= *a || v - 0.5 * h >= *b),
        }
    }
}

fn cell_ball_distance2(c: &[f64], h: f64, center: &[f64]) -> f64 {
    c.iter()
        .zip(center)
        .map(|(v, z)| {
            let d = ((v - z).abs() - 0.5 * h).max(0.0);
            d * d
        })
        .sum()
}

fn domain_misses_cell(d: &DomainSpec, c: &[f64], h: f64) -> bool {
    match d {
        DomainSpec::HalfBall { radius, .. } => {
            c[c.len() - 1] + 0.5 * h <= 0.0 || cell_ball_distance2(c, h, &[0.0; 3][..c.len()]) >= radius * radius
        }
        DomainSpec::Ball { radius, .. } => cell_ball_distance2(c, h, &[0.0; 3][..c.len()]) >= radius * radius,
        DomainSpec::Box { lo, hi } => Region::Box {
            lo: lo.clone(),
            hi: hi.clone(),
        }
        .misses_cell(c, h),
        DomainSpec::Radial { .. } => false,
    }
}

const SUB: usize = 8;

/// Fraction of the cell `[c - h/2, c + h/2]^m` where `inside` holds. Both
/// sets involved are convex, so a cell with all corners inside is full.
fn cell_fraction(c: &[f64], h: f64, inside: &dyn Fn(&[f64]) -> bool) -> f64 {
    let m = c.len();
    let mut p = [0.0; 3];
    let corners = 1usize << m;
    let mut all = true;
    for code in 0..corners {
        for k in 0..m {
            let s = if code >> k & 1 == 1 { 0.5 } else { -0.5 };
            p[k] = c[k] + s * h;
        }
        if !inside(&p[..m]) {
            all = false;
            break;
        }
    }
    if all {
        return 1.0;
    }
    let total = SUB.pow(m as u32);
    let mut hits = 0usize;
    for code in 0..total {
        let mut r = code;
        for k in 0..m {
            let j = r % SUB;
            r /= SUB;
            p[k] = c[k] + h * ((j as f64 + 0.5) / SUB as f64 - 0.5);
        }
        if inside(&p[..m]) {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Unit-sphere area `|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)`.
pub(crate) fn sphere_area(n: usize) -> f64 {
    // Gamma(n/2) from Gamma(1) = 1, Gamma(1/2) = sqrt(pi).
    let mut g = if n % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if n % 2 == 0 { 1.0 } else { 0.5 };
    while x < n as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / g
}

/// Precomputed volume weights of `domain ∩ region` on a grid.
#[derive(Debug, Clone)]
pub struct Quadrature {
    nodes: Vec<(usize, f64)>,
}

impl Quadrature {
    pub fn volume(grid: &Grid, region: &Region) -> Result<Self, GeometryError> {
        let nodes = if let Some(radii) = grid.radii() {
            radial_weights(grid, radii, region)
        } else {
            cartesian_weights(grid, region)
        };
        if nodes.is_empty() {
            return Err(GeometryError::EmptyRegion);
        }
        Ok(Self { nodes })
    }

    /// `(n-1)`-dimensional weights on `{x_n = 0, |x'| < rho}`.
    pub fn flat(grid: &Grid, rho: f64) -> Result<Self, GeometryError> {
        let DomainSpec::HalfBall { radius, .. } = *grid.domain() else {
            return Err(GeometryError::NotHalfBall);
        };
        let n = grid.dim();
        let r = rho.min(radius);
        let h = grid.spacing();
        let inside = |y: &[f64]| norm2(y) < r * r;
        let mut multi = [0usize; 3];
        let mut nodes = Vec::new();
        for i in 0..grid.node_count() {
            if !grid.is_active(i) {
                continue;
            }
            grid.multi_into(i, &mut multi);
            if multi[n - 1] != 0 {
                continue;
            }
            let w = if n == 1 {
                if r > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                let x = grid.coords(i);
                if cell_ball_distance2(&x[..n - 1], h, &[0.0; 3][..n - 1]) >= r * r {
                    0.0
                } else {
                    h.powi(n as i32 - 1) * cell_fraction(&x[..n - 1], h, &inside)
                }
            };
            if w > 0.0 {
                nodes.push((i, w));
            }
        }
        if nodes.is_empty() {
            return Err(GeometryError::EmptyRegion);
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[(usize, f64)] {
        &self.nodes
    }

    pub fn integrate(&self, g: &ScalarField) -> f64 {
        self.nodes.iter().map(|&(i, w)| w * g.get(i)).sum()
    }

    /// `sum w_i f(i)` over lattice indices.
    pub fn integrate_with(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.nodes.iter().map(|&(i, w)| w * f(i)).sum()
    }

    pub fn measure(&self) -> f64 {
        self.nodes.iter().map(|&(_, w)| w).sum()
    }
}

fn cartesian_weights(grid: &Grid, region: &Region) -> Vec<(usize, f64)> {
    let n = grid.dim();
    let h = grid.spacing();
    let vol = h.powi(n as i32);
    let dom = grid.domain();
    let inside = |x: &[f64]| dom.contains(x) && region.contains(x);
    let mut out = Vec::new();
    for i in 0..grid.node_count() {
        if !grid.is_active(i) {
            continue;
        }
        let x = grid.coords(i);
        let c = &x[..n];
        if domain_misses_cell(dom, c, h) || region.misses_cell(c, h) {
            continue;
        }
        let f = cell_fraction(c, h, &inside);
        if f > 0.0 {
            out.push((i, vol * f));
        }
    }
    out
}

fn radial_weights(grid: &Grid, radii: &[f64], region: &Region) -> Vec<(usize, f64)> {
    let n = grid.dim();
    let m = radii.len();
    let cap = match region {
        Region::Whole => f64::INFINITY,
        Region::Ball { center, radius } if center.iter().all(|c| *c == 0.0) => *radius,
        // Only balls about the centre are radial regions.
        _ => return Vec::new(),
    };
    let c = sphere_area(n) / n as f64;
    let mut out = Vec::new();
    for i in 0..m {
        let a = if i == 0 { radii[0] } else { 0.5 * (radii[i - 1] + radii[i]) };
        let b = if i + 1 == m { radii[m - 1] } else { 0.5 * (radii[i] + radii[i + 1]) };
        let b = b.min(cap);
        if b > a {
            out.push((i, c * (b.powi(n as i32) - a.powi(n as i32))));
        }
    }
    out
}

/// `int_{region ∩ domain} g`.
pub fn volume_integral(g: &ScalarField, region: &Region) -> Result<f64, GeometryError> {
    Ok(Quadrature::volume(g.grid(), region)?.integrate(g))
}

/// `int_{{x_n = 0, |x'| < rho}} g dH^{n-1}` on half-ball grids.
pub fn surface_integral_flat(g: &ScalarField, rho: f64) -> Result<f64, GeometryError> {
    Ok(Quadrature::flat(g.grid(), rho)?.integrate(g))
}

#[derive(Debug, Clone, Copy)]
pub struct LevelSetOptions {
    /// Band half-width as a multiple of `h max|grad u|`.
    pub band_factor: f64,
    /// Nodes with `|grad u| < critical_rel * max|grad u|` count as critical.
    pub critical_rel: f64,
    /// Largest tolerated fraction of critical nodes in the band.
    pub max_critical_fraction: f64,
}

impl Default for LevelSetOptions {
    fn default() -> Self {
        Self {
            band_factor: 2.0,
            critical_rel: 1e-2,
            max_critical_fraction: 0.01,
        }
    }
}

/// `int_{{u = t} ∩ region} w dH^{n-1}` through the coarea band average
/// `(1/2eps) int_{|u - t| < eps} w |grad u|`, `eps = 2 h max|grad u|`.
/// First-order accurate.
pub fn levelset_surface_integral(
    u: &ScalarField,
    w: &ScalarField,
    t: f64,
    region: &Region,
    opts: LevelSetOptions,
) -> Result<f64, GeometryError> {
    let grid = u.grid();
    if !grid.same_as(w.grid()) {
        return Err(GeometryError::InvalidDomain("u and w on different grids".into()));
    }
    let quad = Quadrature::volume(grid, region)?;
    let (grad, _) = gradient_hessian(u);
    let gnorm = grad.norm();
    let gmax = gnorm.max_abs();
    if gmax == 0.0 {
        return Ok(0.0);
    }
    let eps = opts.band_factor * grid.spacing() * gmax;
    let mut band = 0usize;
    let mut critical = 0usize;
    let mut sum = 0.0;
    for &(i, wt) in quad.nodes() {
        if (u.get(i) - t).abs() < eps {
            band += 1;
            let g = gnorm.get(i);
            if g < opts.critical_rel * gmax {
                critical += 1;
            }
            sum += wt * w.get(i) * g;
        }
    }
    if band > 0 {
        let fraction = critical as f64 / band as f64;
        if fraction > opts.max_critical_fraction {
            return Err(GeometryError::DegenerateLevelSet { fraction });
        }
    }
    Ok(sum / (2.0 * eps))
}

#[cfg(test)]
mod tests {
    use super::super::build_grid;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.1).unwrap();
        let one = ScalarField::from_fn(&g, |_| 1.0);
        assert!((volume_integral(&one, &Region::Whole).unwrap() - 1.0).abs() < 1e-12);
        let zero = ScalarField::zeros(&g);
        assert_eq!(volume_integral(&zero, &Region::Whole).unwrap(), 0.0);
        let hb = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 128.0).unwrap();
        let one = ScalarField::from_fn(&hb, |_| 1.0);
        let area = volume_integral(&one, &Region::Whole).unwrap();
        assert!((area - PI / 2.0).abs() < 0.01, "{area}");
        let len = surface_integral_flat(&one, 1.0).unwrap();
        assert!((len - 2.0).abs() < 0.02, "{len}");
        assert_eq!(surface_integral_flat(&ScalarField::zeros(&hb), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn disc_area_on_3d_flat_boundary() {
        let g = build_grid(&DomainSpec::half_ball(3, 1.0), 1.0 / 64.0).unwrap();
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let a = surface_integral_flat(&one, 1.0).unwrap();
        assert!((a - PI).abs() < 0.03, "{a}");
    }

    #[test]
    fn rim_node_gets_half_weight() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 0.25).unwrap();
        let q = Quadrature::flat(&g, 0.5).unwrap();
        let at = |x0: f64| {
            q.nodes()
                .iter()
                .find(|(i, _)| g.coords(*i)[0] == x0)
                .map(|(_, w)| *w)
                .unwrap()
        };
        assert_eq!(at(0.0), 0.25);
        assert_eq!(at(0.5), 0.125);
    }

    #[test]
    fn region_errors() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.1).unwrap();
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let far = Region::Ball {
            center: vec![5.0, 5.0],
            radius: 1.0,
        };
        assert_eq!(volume_integral(&one, &far).unwrap_err(), GeometryError::EmptyRegion);
        assert_eq!(surface_integral_flat(&one, 1.0).unwrap_err(), GeometryError::NotHalfBall);
    }

    #[test]
    fn radial_ball_volume() {
        for n in [2usize, 3, 10] {
            let g = build_grid(&DomainSpec::radial(n, 1.0), 0.01).unwrap();
            let one = ScalarField::from_fn(&g, |_| 1.0);
            let v = volume_integral(&one, &Region::Whole).unwrap();
            let exact = sphere_area(n) / n as f64;
            assert!((v - exact).abs() < 1e-12 * exact);
            let half = volume_integral(&one, &Region::centered(n, 0.5)).unwrap();
            assert!((half - exact * 0.5f64.powi(n as i32)).abs() < 1e-12);
        }
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn level_set_circle() {
        let g = build_grid(&DomainSpec::ball(2, 1.0), 1.0 / 128.0).unwrap();
        let u = ScalarField::from_fn(&g, |x| 1.0 - x[0] * x[0] - x[1] * x[1]);
        let w = ScalarField::from_fn(&g, |x| 4.0 * (x[0] * x[0] + x[1] * x[1]));
        let v = levelset_surface_integral(&u, &w, 0.75, &Region::Whole, Default::default()).unwrap();
        assert!((v - PI).abs() < 0.05 * PI, "{v}");
        let z = levelset_surface_integral(&u, &ScalarField::zeros(&g), 0.75, &Region::Whole, Default::default()).unwrap();
        assert_eq!(z, 0.0);
        let above = levelset_surface_integral(&u, &w, 2.0, &Region::Whole, Default::default()).unwrap();
        assert_eq!(above, 0.0);
    }
}
