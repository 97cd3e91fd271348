use std::f64::consts::PI;
use std::sync::Arc;

use crate::geometry::{gradient_hessian, DomainSpec, Grid, MatField, ScalarField, VecField};
use crate::linalg::SmallMat;

use super::EstimateError;

/// Declared support of a test function.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Grid-sampled: only vanishing on boundary nodes is known.
    Sampled,
}

impl std::fmt::Display for Support {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Support::Ball { center, radius } => write!(f, "B_{radius}({center:?})"),
            Support::Box { lo, hi } => write!(f, "box {lo:?}..{hi:?}"),
            Support::Sampled => write!(f, "sampled"),
        }
    }
}

/// A cut-off or test function with its gradient and Hessian on a grid.
#[derive(Debug, Clone)]
pub struct TestFunction {
    name: String,
    support: Support,
    value: ScalarField,
    grad: VecField,
    hess: MatField,
}

impl TestFunction {
    /// Samples `f(x) -> (value, gradient, Hessian)` at every active node.
    fn analytic(
        grid: &Arc<Grid>,
        name: String,
        support: Support,
        f: impl Fn(&[f64]) -> (f64, [f64; 3], SmallMat),
    ) -> Self {
        let n = grid.dim();
        let mut vals = vec![0.0; grid.node_count()];
        let mut grad = VecField::zeros(grid, n);
        let mut hess = MatField::zeros(grid, n);
        for i in 0..grid.node_count() {
            if !grid.is_active(i) {
                continue;
            }
            let x = grid.coords(i);
            let (v, g, h) = f(&x[..n]);
            vals[i] = v;
            grad.at_mut(i).copy_from_slice(&g[..n]);
            hess.set_mat(i, &h);
        }
        let value = ScalarField::from_values(grid, vals).expect("finite test function");
        Self {
            name,
            support,
            value,
            grad,
            hess,
        }
    }

    /// `(1 - |x-c|^2/R^2)^3` inside `B_R(c)`, zero outside. `C^2`.
    pub fn bump(grid: &Arc<Grid>, center: &[f64], radius: f64) -> Self {
        let n = grid.dim();
        let c = center.to_vec();
        let r2 = radius * radius;
        Self::analytic(
            grid,
            format!("bump(c={center:?},R={radius})"),
            Support::Ball {
                center: c.clone(),
                radius,
            },
            move |x| {
                let d: Vec<f64> = (0..n).map(|i| x[i] - c[i]).collect();
                let q = d.iter().map(|v| v * v).sum::<f64>() / r2;
                if q >= 1.0 {
                    return (0.0, [0.0; 3], SmallMat::zeros(n));
                }
                let s = 1.0 - q;
                let (g0, g1, g2) = (s * s * s, -3.0 * s * s, 6.0 * s);
                let mut g = [0.0; 3];
                for i in 0..n {
                    g[i] = g1 * 2.0 * d[i] / r2;
                }
                let h = SmallMat::from_fn(n, |i, j| {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    g2 * (2.0 * d[i] / r2) * (2.0 * d[j] / r2) + g1 * 2.0 * dij / r2
                });
                (g0, g, h)
            },
        )
    }

    /// Radial cut-off: 1 on `B_inner`, 0 outside `B_outer`, quintic smoothstep between.
    pub fn cutoff(grid: &Arc<Grid>, inner: f64, outer: f64) -> Self {
        let n = grid.dim();
        let w = outer - inner;
        Self::analytic(
            grid,
            format!("cutoff({inner},{outer})"),
            Support::Ball {
                center: vec![0.0; n],
                radius: outer,
            },
            move |x| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r <= inner {
                    return (1.0, [0.0; 3], SmallMat::zeros(n));
                }
                if r >= outer {
                    return (0.0, [0.0; 3], SmallMat::zeros(n));
                }
                let t = (r - inner) / w;
                let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
                let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
                let d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w);
                let (e1, e2) = (-ds, -d2s);
                let mut g = [0.0; 3];
                for i in 0..n {
                    g[i] = e1 * x[i] / r;
                }
                let h = SmallMat::from_fn(n, |i, j| {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let xx = x[i] * x[j] / (r * r);
                    e2 * xx + e1 / r * (dij - xx)
                });
                (1.0 - s, g, h)
            },
        )
    }

    /// `prod_i cos^2(pi (x_i - c_i) / (2w))` on the cube `|x_i - c_i| < w`.
    pub fn cosine_bump(grid: &Arc<Grid>, center: &[f64], w: f64) -> Self {
        let n = grid.dim();
        let c = center.to_vec();
        let k = PI / (2.0 * w);
        Self::analytic(
            grid,
            format!("cosine(c={center:?},w={w})"),
            Support::Box {
                lo: c.iter().map(|v| v - w).collect(),
                hi: c.iter().map(|v| v + w).collect(),
            },
            move |x| {
                if (0..n).any(|i| (x[i] - c[i]).abs() >= w) {
                    return (0.0, [0.0; 3], SmallMat::zeros(n));
                }
                // factor values and first/second derivatives
                let mut f = [0.0; 3];
                let mut df = [0.0; 3];
                let mut d2f = [0.0; 3];
                for i in 0..n {
                    let a = k * (x[i] - c[i]);
                    f[i] = a.cos().powi(2);
                    df[i] = -k * (2.0 * a).sin();
                    d2f[i] = -2.0 * k * k * (2.0 * a).cos();
                }
                let prod_except = |skip: &[usize]| (0..n).filter(|i| !skip.contains(i)).map(|i| f[i]).product::<f64>();
                let v = prod_except(&[]);
                let mut g = [0.0; 3];
                for i in 0..n {
                    g[i] = df[i] * prod_except(&[i]);
                }
                let h = SmallMat::from_fn(n, |i, j| {
                    if i == j {
                        d2f[i] * prod_except(&[i])
                    } else {
                        df[i] * df[j] * prod_except(&[i, j])
                    }
                });
                (v, g, h)
            },
        )
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        let n = grid.dim();
        Self::analytic(grid, "zero".into(), Support::Sampled, move |_| (0.0, [0.0; 3], SmallMat::zeros(n)))
    }

    /// Grid-sampled function; derivatives by finite differences.
    pub fn from_field(name: &str, value: ScalarField) -> Self {
        let (grad, hess) = gradient_hessian(&value);
        Self {
            name: name.to_string(),
            support: Support::Sampled,
            value,
            grad,
            hess,
        }
    }

    /// The 15 bumps: 5 centres times 3 scales, `R = s min(c_n, 1 - |c|)`.
    pub fn bump_family(grid: &Arc<Grid>) -> Vec<TestFunction> {
        let n = grid.dim();
        let centers: [(f64, f64); 5] = [(0.0, 0.5), (-0.3, 0.45), (0.3, 0.45), (0.0, 0.3), (0.0, 0.65)];
        let mut out = Vec::with_capacity(15);
        for &(t, v) in &centers {
            let mut c = vec![0.0; n];
            if n >= 2 {
                c[0] = t;
            }
            c[n - 1] = v;
            let norm = c.iter().map(|a| a * a).sum::<f64>().sqrt();
            let reach = v.min(1.0 - norm);
            for s in [0.4, 0.65, 0.9] {
                out.push(Self::bump(grid, &c, s * reach));
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn support(&self) -> &Support {
        &self.support
    }
    pub fn values(&self) -> &ScalarField {
        &self.value
    }
    pub fn grid(&self) -> &Arc<Grid> {
        self.value.grid()
    }
    pub fn value(&self, i: usize) -> f64 {
        self.value.get(i)
    }
    pub fn grad(&self, i: usize) -> &[f64] {
        self.grad.at(i)
    }
    pub fn hess(&self, i: usize) -> SmallMat {
        self.hess.at(i)
    }

    /// `grad(eta^2) = 2 eta grad eta`.
    pub fn sq_grad(&self, i: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        let v = self.value(i);
        for (k, gk) in self.grad(i).iter().enumerate() {
            g[k] = 2.0 * v * gk;
        }
        g
    }

    /// `D^2(eta^2) = 2 grad eta grad eta^T + 2 eta D^2 eta`.
    pub fn sq_hess(&self, i: usize) -> SmallMat {
        let g = self.grad(i);
        let v = self.value(i);
        let h = self.hess(i);
        SmallMat::from_fn(g.len(), |a, b| 2.0 * g[a] * g[b] + 2.0 * v * h.get(a, b))
    }

    /// Declared support inside the open domain (closure for boxes), or
    /// zero boundary values for sampled functions.
    pub fn check_compact_in(&self, domain: &DomainSpec) -> Result<(), EstimateError> {
        let ok = match (&self.support, domain) {
            (Support::Sampled, _) => {
                let g = self.grid();
                return match g
                    .kinds()
                    .iter()
                    .enumerate()
                    .find(|(i, k)| k.is_boundary() && self.value(*i).abs() > 1e-14)
                {
                    Some((i, _)) => Err(EstimateError::Support(format!("sampled, nonzero at boundary node {i}"))),
                    None => Ok(()),
                };
            }
            (Support::Ball { center, radius }, DomainSpec::HalfBall { radius: big, .. }) => {
                let n = center.len();
                center[n - 1] - radius >= 0.0 && euclid(center) + radius <= *big
            }
            (Support::Ball { center, radius }, DomainSpec::Ball { radius: big, .. }) => {
                euclid(center) + radius <= *big
            }
            (Support::Ball { center, radius }, DomainSpec::Box { lo, hi }) => {
                (0..center.len()).all(|i| center[i] - radius >= lo[i] && center[i] + radius <= hi[i])
            }
            (Support::Box { lo, hi }, DomainSpec::Box { lo: a, hi: b }) => {
                (0..lo.len()).all(|i| lo[i] >= a[i] && hi[i] <= b[i])
            }
            (Support::Box { lo, hi }, DomainSpec::HalfBall { radius: big, .. })
            | (Support::Box { lo, hi }, DomainSpec::Ball { radius: big, .. }) => {
                let n = lo.len();
                let far: f64 = (0..n).map(|i| lo[i].abs().max(hi[i].abs()).powi(2)).sum::<f64>().sqrt();
                far <= *big && (!matches!(domain, DomainSpec::HalfBall { .. }) || lo[n - 1] >= 0.0)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(EstimateError::Support(self.support.to_string()))
        }
    }

    /// Support inside the full ball `B_rho` (may touch the flat boundary).
    pub fn check_in_ball(&self, rho: f64) -> Result<(), EstimateError> {
        let ok = match &self.support {
            Support::Ball { center, radius } => euclid(center) + radius <= rho,
            Support::Box { lo, hi } => {
                (0..lo.len()).map(|i| lo[i].abs().max(hi[i].abs()).powi(2)).sum::<f64>().sqrt() <= rho
            }
            Support::Sampled => {
                let g = self.grid();
                (0..g.node_count()).all(|i| {
                    let x = g.coords(i);
                    self.value(i) == 0.0 || euclid(&x[..g.dim()]) < rho
                })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(EstimateError::Support(format!("{} not inside B_{rho}", self.support)))
        }
    }

    /// Whether `x` lies in the declared support (sampled: `eta(x) != 0`).
    pub fn in_support(&self, i: usize) -> bool {
        let g = self.grid();
        let x = g.coords(i);
        let x = &x[..g.dim()];
        match &self.support {
            Support::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < radius * radius
            }
            Support::Box { lo, hi } => (0..x.len()).all(|k| x[k] > lo[k] && x[k] < hi[k]),
            Support::Sampled => self.value(i) != 0.0,
        }
    }

    /// `min eta` over active nodes.
    pub fn min_value(&self) -> (usize, f64) {
        let g = self.grid();
        (0..g.node_count())
            .filter(|&i| g.is_active(i))
            .map(|i| (i, self.value(i)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn fd_check(t: &TestFunction, f: impl Fn(&[f64]) -> f64) {
        let g = t.grid().clone();
        let n = g.dim();
        let e = 1e-7;
        for i in (0..g.node_count()).step_by(7).filter(|&i| g.is_active(i)) {
            let x = g.coords(i);
            let x = &x[..n];
            assert!((t.value(i) - f(x)).abs() < 1e-14);
            for k in 0..n {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += e;
                xm[k] -= e;
                let d = (f(&xp) - f(&xm)) / (2.0 * e);
                assert!((t.grad(i)[k] - d).abs() < 1e-5, "{} grad {k} at {x:?}: {} vs {d}", t.name(), t.grad(i)[k]);
            }
        }
    }

    #[test]
    fn analytic_gradients() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 32.0).unwrap();
        let b = TestFunction::bump(&g, &[0.1, 0.5], 0.3);
        fd_check(&b, |x| {
            let q = ((x[0] - 0.1).powi(2) + (x[1] - 0.5).powi(2)) / 0.09;
            if q < 1.0 {
                (1.0 - q).powi(3)
            } else {
                0.0
            }
        });
        let c = TestFunction::cutoff(&g, 0.3, 0.7);
        fd_check(&c, |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let t = ((r - 0.3) / 0.4).clamp(0.0, 1.0);
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        });
        let cb = TestFunction::cosine_bump(&g, &[0.0, 0.5], 0.25);
        fd_check(&cb, |x| {
            if (x[0]).abs() < 0.25 && (x[1] - 0.5).abs() < 0.25 {
                (PI * x[0] / 0.5).cos().powi(2) * (PI * (x[1] - 0.5) / 0.5).cos().powi(2)
            } else {
                0.0
            }
        });
    }

    #[test]
    fn family_is_compact_in_half_ball() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 16.0).unwrap();
        let fam = TestFunction::bump_family(&g);
        assert_eq!(fam.len(), 15);
        for t in &fam {
            t.check_compact_in(g.domain()).unwrap();
            assert!(t.min_value().1 >= 0.0);
        }
        let c = TestFunction::cutoff(&g, 0.5, 0.9);
        assert!(c.check_compact_in(g.domain()).is_err());
        c.check_in_ball(1.0).unwrap();
    }
}
