use super::{norm2, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoveringMode {
    /// Disjoint open cubes of side `delta` resting on `{x_n = 0}`, all
    /// inside the half-ball of radius `container`.
    Cubes { container: f64 },
    /// Balls `B_delta(y)` with `y_n = 0` inside `B_1`, plus interior balls
    /// `B_{delta/4}(z)` inside `B_1^+`.
    BoundaryAndInteriorBalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverShape {
    Cube,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverTag {
    Interior,
    BoundaryCentered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverElement {
    pub shape: CoverShape,
    /// Cube centre or ball centre.
    pub center: Vec<f64>,
    /// Cube side or ball radius.
    pub size: f64,
    pub tag: CoverTag,
}

impl CoverElement {
    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.shape {
            CoverShape::Cube => x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= 0.5 * self.size),
            CoverShape::Ball => {
                let d: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                d <= self.size * self.size
            }
        }
    }

    /// Largest distance from the origin of a point of the element.
    pub fn reach(&self) -> f64 {
        match self.shape {
            CoverShape::Cube => self
                .center
                .iter()
                .map(|c| (c.abs() + 0.5 * self.size).powi(2))
                .sum::<f64>()
                .sqrt(),
            CoverShape::Ball => norm2(&self.center).sqrt() + self.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    pub dim: usize,
    /// Radius of the covered half-ball `B_target^+`.
    pub target: f64,
    pub elements: Vec<CoverElement>,
}

impl Covering {
    pub fn count(&self, tag: CoverTag) -> usize {
        self.elements.iter().filter(|e| e.tag == tag).count()
    }

    pub fn covers(&self, x: &[f64]) -> bool {
        self.elements.iter().any(|e| e.contains(x))
    }
}

/// Covers the half-ball `B_target^+` in dimension `dim` at scale `delta`.
pub fn make_covering(
    dim: usize,
    target: f64,
    mode: CoveringMode,
    delta: f64,
) -> Result<Covering, GeometryError> {
    if !(target > 0.0) {
        return Err(GeometryError::Covering("empty target".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GeometryError::Covering(format!("scale {delta} outside (0, 1)")));
    }
    if dim < 1 || dim > super::MAX_CARTESIAN_DIM {
        return Err(GeometryError::UnsupportedDim(dim));
    }
    let elements = match mode {
        CoveringMode::Cubes { container } => cubes(dim, target, delta, container)?,
        CoveringMode::BoundaryAndInteriorBalls => balls(dim, target, delta)?,
    };
    Ok(Covering { dim, target, elements })
}

/// Iterates integer points of `[-k, k]^(m)` as `f64` vectors.
fn lattice(m: usize, k: i64) -> Vec<Vec<f64>> {
    let side = (2 * k + 1) as usize;
    (0..side.pow(m as u32))
        .map(|mut code| {
            (0..m)
                .map(|_| {
                    let v = (code % side) as i64 - k;
                    code /= side;
                    v as f64
                })
                .collect()
        })
        .collect()
}

fn cubes(dim: usize, target: f64, s: f64, container: f64) -> Result<Vec<CoverElement>, GeometryError> {
    let m = dim - 1;
    let k = (target / s).ceil() as i64 + 1;
    // Tangential offset: cubes centred on the lattice or straddling it;
    // keep whichever reaches less far.
    let mut best: Option<(f64, Vec<CoverElement>)> = None;
    for shift in [0.0, 0.5] {
        let mut els = Vec::new();
        for t in lattice(m, k) {
            for j in 0..=k {
                let mut c: Vec<f64> = t.iter().map(|v| (v + shift) * s).collect();
                c.push((j as f64 + 0.5) * s);
                // keep cubes meeting the open half-ball
                let near: f64 = c
                    .iter()
                    .map(|v| (v.abs() - 0.5 * s).max(0.0).powi(2))
                    .sum();
                if near < target * target {
                    els.push(CoverElement {
                        shape: CoverShape::Cube,
                        center: c,
                        size: s,
                        tag: CoverTag::Interior,
                    });
                }
            }
        }
        let reach = els.iter().map(|e| e.reach()).fold(0.0, f64::max);
        if best.as_ref().map_or(true, |(r, _)| reach < *r) {
            best = Some((reach, els));
        }
    }
    let (reach, els) = best.expect("two candidates");
    if reach > container {
        return Err(GeometryError::Covering(format!(
            "cubes of side {s} reach {reach:.4} > {container:.4}"
        )));
    }
    Ok(els)
}

fn balls(dim: usize, target: f64, delta: f64) -> Result<Vec<CoverElement>, GeometryError> {
    let m = dim - 1;
    let mut els = Vec::new();
    // Boundary balls: tangential spacing delta / sqrt(m) keeps every x'
    // within delta/2 of a centre, so the strip x_n <= (sqrt 3 / 2) delta is
    // covered.
    let sb = if m == 0 { delta } else { delta / (m as f64).sqrt() };
    let kb = (target / sb).ceil() as i64 + 1;
    for t in lattice(m, kb) {
        let mut c: Vec<f64> = t.iter().map(|v| v * sb).collect();
        c.push(0.0);
        if norm2(&c).sqrt() < target + delta {
            let el = CoverElement {
                shape: CoverShape::Ball,
                center: c,
                size: delta,
                tag: CoverTag::BoundaryCentered,
            };
            if el.reach() >= 1.0 {
                return Err(GeometryError::Covering(format!("boundary ball of radius {delta} leaves B_1")));
            }
            els.push(el);
        }
    }
    // Interior balls of radius delta/4 on a cubic lattice of spacing
    // 2 r / sqrt(n), starting at height delta/2.
    let r = 0.25 * delta;
    let a = 2.0 * r / (dim as f64).sqrt();
    let ki = (target / a).ceil() as i64 + 1;
    let z0 = 0.5 * delta + 0.5 * a;
    for t in lattice(m, ki) {
        for j in 0..=((target / a).ceil() as i64 + 1) {
            let mut c: Vec<f64> = t.iter().map(|v| v * a).collect();
            c.push(z0 + j as f64 * a);
            if norm2(&c).sqrt() >= target + r {
                continue;
            }
            let el = CoverElement {
                shape: CoverShape::Ball,
                center: c,
                size: r,
                tag: CoverTag::Interior,
            };
            if el.reach() >= 1.0 || el.center[m] <= r {
                return Err(GeometryError::Covering(format!("interior ball of radius {r} leaves B_1^+")));
            }
            els.push(el);
        }
    }
    Ok(els)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_half_ball(dim: usize, rho: f64, k: usize) -> Vec<Vec<f64>> {
        let pts = lattice(dim, k as i64);
        pts.into_iter()
            .map(|p| p.iter().map(|v| v * rho / k as f64).collect::<Vec<f64>>())
            .filter(|p| p[dim - 1] > 0.0 && norm2(p) < rho * rho)
            .collect()
    }

    #[test]
    fn cube_side_eighth_does_not_fit() {
        let r = make_covering(2, 0.5, CoveringMode::Cubes { container: 4.0 / 7.0 }, 0.125);
        assert!(matches!(r, Err(GeometryError::Covering(_))));
    }

    #[test]
    fn fine_cubes_cover_and_fit() {
        for dim in [2, 3] {
            let c = make_covering(dim, 0.5, CoveringMode::Cubes { container: 4.0 / 7.0 }, 1.0 / 32.0).unwrap();
            for e in &c.elements {
                assert!(e.reach() <= 4.0 / 7.0);
                assert!(e.center[dim - 1] - 0.5 * e.size >= 0.0);
            }
            for p in sample_half_ball(dim, 0.5, if dim == 3 { 8 } else { 20 }) {
                assert!(c.covers(&p), "{p:?}");
            }
        }
    }

    #[test]
    fn ball_covering() {
        for dim in [2, 3] {
            let c = make_covering(dim, 0.5, CoveringMode::BoundaryAndInteriorBalls, 0.1).unwrap();
            assert!(c.count(CoverTag::BoundaryCentered) > 0);
            for e in &c.elements {
                if e.tag == CoverTag::BoundaryCentered {
                    assert_eq!(e.center[dim - 1], 0.0);
                }
            }
            for p in sample_half_ball(dim, 0.5, if dim == 3 { 8 } else { 20 }) {
                assert!(c.covers(&p), "{p:?}");
            }
        }
        assert!(make_covering(2, 0.5, CoveringMode::BoundaryAndInteriorBalls, 0.6).is_err());
        assert!(make_covering(2, 0.0, CoveringMode::BoundaryAndInteriorBalls, 0.1).is_err());
    }
}
