use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GeometryError, Quadrature, Region, ScalarField};

use super::EstimateError;

/// A non-negative set function on balls inside `B_1`.
pub trait BallFunctional {
    fn dim(&self) -> usize;
    fn eval(&self, center: &[f64], radius: f64) -> f64;
}

/// Closure-backed functional.
pub struct FnFunctional<F: Fn(&[f64], f64) -> f64> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], f64) -> f64> FnFunctional<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], f64) -> f64> BallFunctional for FnFunctional<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, center: &[f64], radius: f64) -> f64 {
        (self.f)(center, radius)
    }
}

/// `B -> int_{B ∩ domain} density`, e.g. `|grad u|²` on a half-ball grid.
pub struct GradientEnergy {
    density: ScalarField,
}

impl GradientEnergy {
    pub fn new(density: ScalarField) -> Self {
        Self { density }
    }

    /// `|grad u|²` of `u`.
    pub fn of(u: &ScalarField) -> Self {
        let g = crate::geometry::gradient_hessian(u).0.norm();
        Self::new(g.map(|v| v * v))
    }
}

impl BallFunctional for GradientEnergy {
    fn dim(&self) -> usize {
        self.density.grid().dim()
    }
    fn eval(&self, center: &[f64], radius: f64) -> f64 {
        let region = Region::Ball {
            center: center.to_vec(),
            radius,
        };
        match Quadrature::volume(self.density.grid(), &region) {
            Ok(q) => q.integrate(&self.density),
            Err(GeometryError::EmptyRegion) => 0.0,
            Err(_) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimonOptions {
    /// Random balls whose half-radius lattice covers are checked.
    pub spot_checks: usize,
    pub seed: u64,
    /// Hypothesis radii `2^{-k}`, `k = 0..=levels`.
    pub levels: u32,
}

impl Default for SimonOptions {
    fn default() -> Self {
        Self {
            spot_checks: 64,
            seed: 0,
            levels: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateKind {
    /// Explicit absorption: `N` balls of radius `rho/8` cover `B_{rho/2}`,
    /// `q = N delta 2^beta < 1`, `C = N 4^beta / (1 - q)`.
    Absorbed { q: f64, cover_count: usize },
    /// `q >= 1`: `C` is the sampled sup of `rho^beta sigma(B_{rho/2})` over `C0`.
    Sampled { sup: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimonCertificate {
    pub c: f64,
    pub c0: f64,
    pub sigma_half: f64,
    /// `sigma(B_1/2) <= C C0` on the computed numbers.
    pub bound_holds: bool,
    pub kind: CertificateKind,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimonOutcome {
    Certificate(SimonCertificate),
    Counterexample { y: Vec<f64>, rho: f64, lhs: f64, rhs: f64 },
}

/// Lattice points `y + s m` whose cells of side `s` meet `B_r(y)`.
fn lattice_cover(y: &[f64], r: f64, s: f64) -> Vec<Vec<f64>> {
    let n = y.len();
    let k = (r / s).ceil() as i64 + 1;
    let side = (2 * k + 1) as usize;
    let mut out = Vec::new();
    for code in 0..side.pow(n as u32) {
        let mut c = code;
        let mut z = vec![0.0; n];
        let mut d2 = 0.0;
        for zk in z.iter_mut().take(n) {
            let m = (c % side) as i64 - k;
            c /= side;
            let off = m as f64 * s;
            // distance from y to the cell [off - s/2, off + s/2]
            let gap = (off.abs() - 0.5 * s).max(0.0);
            d2 += gap * gap;
            *zk = off;
        }
        if d2 < r * r {
            out.push(z.iter().zip(y).map(|(a, b)| a + b).collect());
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks the Simon hypothesis on a mesh of balls and returns a constant
/// with `sigma(B_1/2) <= C C0`, or the first violating ball.
pub fn simon_absorption(
    sigma: &dyn BallFunctional,
    beta: f64,
    c0: f64,
    delta: f64,
    opts: &SimonOptions,
) -> Result<SimonOutcome, EstimateError> {
    if !(beta >= 0.0) || !(c0 > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(EstimateError::Parameter(format!(
            "need beta >= 0, C0 > 0, delta in (0,1); got {beta}, {c0}, {delta}"
        )));
    }
    let n = sigma.dim();
    let sn = (n as f64).sqrt();

    // Subadditivity on half-radius covers of balls with B_{2rho}(y) in B_1.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.spot_checks {
        let rho: f64 = rng.gen_range(0.05..0.3);
        let y: Vec<f64> = loop {
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * (1.0 - 2.0 * rho)).collect();
            if norm(&y) + 2.0 * rho <= 1.0 {
                break y;
            }
        };
        let whole = sigma.eval(&y, rho);
        let sum: f64 = lattice_cover(&y, rho, rho / sn).iter().map(|z| sigma.eval(z, rho / 2.0)).sum();
        if whole > sum * (1.0 + 1e-9) + 1e-12 {
            return Err(EstimateError::Subadditivity {
                center: y,
                radius: rho,
                whole,
                sum,
            });
        }
    }

    // Hypothesis on the mesh.
    let mut sup: f64 = 0.0;
    let mut samples = 0;
    for k in 0..=opts.levels {
        let rho = 0.5f64.powi(k as i32);
        for y in lattice_cover(&vec![0.0; n], 1.0, rho / 2.0) {
            if norm(&y) + rho > 1.0 + 1e-12 {
                continue;
            }
            samples += 1;
            let w = rho.powf(beta);
            let lhs = w * sigma.eval(&y, rho / 2.0);
            let rhs = delta * w * sigma.eval(&y, rho) + c0;
            if !(lhs <= rhs * (1.0 + 1e-12)) {
                return Ok(SimonOutcome::Counterexample { y, rho, lhs, rhs });
            }
            sup = sup.max(lhs);
        }
    }

    // Cover of B_{1/2} by balls of radius 1/8; their doubles stay in B_1.
    let cover_count = lattice_cover(&vec![0.0; n], 0.5, 0.25 / sn).len();
    let q = cover_count as f64 * delta * 2f64.powf(beta);
    let (c, kind) = if q < 1.0 {
        (
            cover_count as f64 * 4f64.powf(beta) / (1.0 - q),
            CertificateKind::Absorbed { q, cover_count },
        )
    } else {
        (sup / c0, CertificateKind::Sampled { sup })
    };
    let sigma_half = sigma.eval(&vec![0.0; n], 0.5);
    Ok(SimonOutcome::Certificate(SimonCertificate {
        c,
        c0,
        sigma_half,
        bound_holds: sigma_half <= c * c0 * (1.0 + 1e-12),
        kind,
        samples,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn measure_and_inverse_radius() {
        let meas = FnFunctional::new(2, |_, r| PI * r * r);
        match simon_absorption(&meas, 0.0, PI, 0.9, &SimonOptions::default()).unwrap() {
            SimonOutcome::Certificate(c) => assert!(c.bound_holds),
            o => panic!("{o:?}"),
        }
        let inv = FnFunctional::new(2, |_, r| 1.0 / r);
        match simon_absorption(&inv, 1.0, 2.0, 0.5, &SimonOptions::default()).unwrap() {
            SimonOutcome::Certificate(c) => {
                assert!(c.bound_holds);
                assert!((c.sigma_half - 2.0).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn small_delta_absorbs() {
        let inv = FnFunctional::new(1, |_, r| 1.0 / r);
        match simon_absorption(&inv, 1.0, 2.0, 1e-3, &SimonOptions::default()).unwrap() {
            SimonOutcome::Certificate(c) => {
                assert!(matches!(c.kind, CertificateKind::Absorbed { .. }), "{c:?}");
                assert!(c.bound_holds);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn planted_violation() {
        let spiked = FnFunctional::new(2, |y: &[f64], r| {
            if norm(y) < 1e-12 && (r - 0.125).abs() < 1e-12 {
                101.0
            } else {
                1.0
            }
        });
        match simon_absorption(&spiked, 0.0, 2.0, 0.5, &SimonOptions::default()).unwrap() {
            SimonOutcome::Counterexample { y, rho, .. } => {
                assert!(norm(&y) < 1e-12);
                assert_eq!(rho, 0.25);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn superadditive_is_rejected() {
        let bad = FnFunctional::new(2, |_, r| r.powi(4));
        assert!(matches!(
            simon_absorption(&bad, 0.0, 1.0, 0.5, &SimonOptions::default()),
            Err(EstimateError::Subadditivity { .. })
        ));
    }
}
