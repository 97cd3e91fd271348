//! The operator `L = a_ij d_ij + b_i d_i`, its hypotheses, derived
//! quantities and discretisation.

mod assemble;
mod flatten;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprlang::{differentiate, parse, EvalError, Expr, ExprError, Signature};
use crate::geometry::{DomainSpec, Grid, VecField};
use crate::linalg::{SmallMat, SpdError};

pub use assemble::{assemble_ju, assemble_l, DiscreteOperator};
pub use flatten::flatten;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("evaluation failed at {at:?}: {source}")]
    Eval { at: Vec<f64>, source: EvalError },
    #[error("a_{i}{j} and a_{j}{i} differ")]
    Asymmetric { i: usize, j: usize },
    #[error("coefficient matrix not SPD at {at:?}: {source}")]
    NotSpd { at: Vec<f64>, source: SpdError },
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("stencil of node {node} reaches an exterior node")]
    StencilExterior { node: usize },
    #[error("asserted {name} = {asserted} contradicted by sample value {sampled}")]
    Hypothesis {
        name: &'static str,
        asserted: f64,
        sampled: f64,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("graph must be C^2 in x' and independent of x_n: {0}")]
    NonSmoothGraph(String),
}

/// A hypothesis constant: given by the user or measured by [`CoefficientSpec::audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Unset,
    Asserted(f64),
    Audited(f64),
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Unset => None,
            Bound::Asserted(v) | Bound::Audited(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub samples: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    pub max_da: f64,
    pub max_b: f64,
}

impl AuditReport {
    pub fn eps(&self) -> f64 {
        self.max_da + self.max_b
    }
}

fn tri(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Coefficients `a_ij(x)` (symmetric, upper triangle stored) and `b_i(x)`
/// as expressions in `x1 .. xn`.
#[derive(Debug, Clone)]
pub struct CoefficientSpec {
    dim: usize,
    a: Vec<Expr>,
    b: Vec<Expr>,
    /// `da[k][tri(i, j)] = d_k a_ij`.
    da: Vec<Vec<Expr>>,
    pub c0: Bound,
    pub big_c0: Bound,
    pub eps: Bound,
}

impl CoefficientSpec {
    /// Upper-triangular `a` (row-major, `n(n+1)/2` entries) and `b`.
    pub fn new(dim: usize, a_upper: Vec<Expr>, b: Vec<Expr>) -> Result<Self, OperatorError> {
        let t = dim * (dim + 1) / 2;
        if a_upper.len() != t {
            return Err(OperatorError::Shape {
                expected: t,
                got: a_upper.len(),
            });
        }
        if b.len() != dim {
            return Err(OperatorError::Shape {
                expected: dim,
                got: b.len(),
            });
        }
        let sig = Signature::coords(dim);
        for e in a_upper.iter().chain(&b) {
            if **e.signature() != *sig {
                return Err(OperatorError::Expr(ExprError::SignatureMismatch));
            }
        }
        let mut da = Vec::with_capacity(dim);
        for k in 0..dim {
            let var = format!("x{}", k + 1);
            da.push(
                a_upper
                    .iter()
                    .map(|e| differentiate(e, &var))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        Ok(Self {
            dim,
            a: a_upper,
            b,
            da,
            c0: Bound::Unset,
            big_c0: Bound::Unset,
            eps: Bound::Unset,
        })
    }

    /// Full `n x n` matrix and drift as strings. Off-diagonal pairs must be
    /// identical formulas or agree on a sample.
    pub fn from_strings<S: AsRef<str>>(a: &[Vec<S>], b: &[S]) -> Result<Self, OperatorError> {
        let n = a.len();
        let sig = Signature::coords(n);
        let mut upper = Vec::new();
        for i in 0..n {
            if a[i].len() != n {
                return Err(OperatorError::Shape {
                    expected: n,
                    got: a[i].len(),
                });
            }
            for j in i..n {
                let e = parse(a[i][j].as_ref(), &sig)?;
                if j > i {
                    let t = parse(a[j][i].as_ref(), &sig)?;
                    if t != e && !agree_on_sample(&e, &t, n) {
                        return Err(OperatorError::Asymmetric { i: i + 1, j: j + 1 });
                    }
                }
                upper.push(e);
            }
        }
        let b = b
            .iter()
            .map(|s| parse(s.as_ref(), &sig))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(n, upper, b)
    }

    /// `A = I`, `b = 0`.
    pub fn identity(dim: usize) -> Self {
        let sig = Signature::coords(dim);
        let a = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .map(|(i, j)| Expr::constant(sig.clone(), if i == j { 1.0 } else { 0.0 }))
            .collect();
        let b = (0..dim).map(|_| Expr::constant(sig.clone(), 0.0)).collect();
        let mut s = Self::new(dim, a, b).expect("well formed");
        s.c0 = Bound::Audited(1.0);
        s.big_c0 = Bound::Audited(1.0);
        s.eps = Bound::Audited(0.0);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a_expr(&self, i: usize, j: usize) -> &Expr {
        &self.a[tri(self.dim, i, j)]
    }

    pub fn b_expr(&self, i: usize) -> &Expr {
        &self.b[i]
    }

    pub fn is_audited(&self) -> bool {
        self.c0.value().is_some() && self.big_c0.value().is_some() && self.eps.value().is_some()
    }

    /// True when `A` is the identity and `b = 0` symbolically.
    pub fn is_laplacian(&self) -> bool {
        (0..self.dim).all(|i| {
            (i..self.dim).all(|j| self.a_expr(i, j).as_const() == Some(if i == j { 1.0 } else { 0.0 }))
        }) && self.b.iter().all(|e| e.as_const() == Some(0.0))
    }

    fn eval(e: &Expr, x: &[f64]) -> Result<f64, OperatorError> {
        e.eval(x).map_err(|source| OperatorError::Eval {
            at: x.to_vec(),
            source,
        })
    }

    pub fn a_at(&self, x: &[f64]) -> Result<SmallMat, OperatorError> {
        let x = &x[..self.dim];
        let mut m = SmallMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = Self::eval(self.a_expr(i, j), x)?;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Ok(m)
    }

    pub fn b_at(&self, x: &[f64]) -> Result<[f64; 3], OperatorError> {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            out[i] = Self::eval(&self.b[i], &x[..self.dim])?;
        }
        Ok(out)
    }

    /// `d_k a_ij` at `x`.
    pub fn da_at(&self, k: usize, i: usize, j: usize, x: &[f64]) -> Result<f64, OperatorError> {
        Self::eval(&self.da[k][tri(self.dim, i, j)], &x[..self.dim])
    }

    /// `b^_i = b_i - d_k a_ki`.
    pub fn hat_b_at(&self, x: &[f64]) -> Result<[f64; 3], OperatorError> {
        let mut out = self.b_at(x)?;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            for k in 0..self.dim {
                *o -= self.da_at(k, k, i, x)?;
            }
        }
        Ok(out)
    }

    /// `sqrt(sum_{k,i,j} (d_k a_ij)^2)` at `x`.
    pub fn da_norm_at(&self, x: &[f64]) -> Result<f64, OperatorError> {
        let mut s = 0.0;
        for k in 0..self.dim {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let v = self.da_at(k, i, j, x)?;
                    s += v * v;
                }
            }
        }
        Ok(s.sqrt())
    }

    /// Samples `samples` points of the closed domain and measures the
    /// ellipticity bounds and `eps = sup|DA| + sup|b|`. Unset bounds become
    /// audited; asserted bounds are checked against the sample.
    pub fn audit(&mut self, domain: &DomainSpec, samples: usize, seed: u64) -> Result<AuditReport, OperatorError> {
        if domain.dim() != self.dim && !matches!(domain, DomainSpec::Radial { .. }) {
            return Err(OperatorError::Shape {
                expected: self.dim,
                got: domain.dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rep = AuditReport {
            samples,
            min_eig: f64::INFINITY,
            max_eig: 0.0,
            max_da: 0.0,
            max_b: 0.0,
        };
        let mut x = vec![0.0; self.dim];
        for _ in 0..samples {
            sample_point(domain, self.dim, &mut rng, &mut x);
            let a = self.a_at(&x)?;
            let (lo, hi) = if self.dim <= 2 {
                let lo = a.min_eigenvalue();
                (lo, a.trace() - if self.dim == 2 { lo } else { 0.0 })
            } else {
                let (v, _) = a.sym_eigen();
                (v[0], v[self.dim - 1])
            };
            if !(lo > 0.0) {
                return Err(OperatorError::NotSpd {
                    at: x.clone(),
                    source: SpdError { min_eig: lo },
                });
            }
            rep.min_eig = rep.min_eig.min(lo);
            rep.max_eig = rep.max_eig.max(hi);
            rep.max_da = rep.max_da.max(self.da_norm_at(&x)?);
            let b = self.b_at(&x)?;
            rep.max_b = rep.max_b.max(b[..self.dim].iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let tol = 1e-12;
        let settle = |bound: &mut Bound, sampled: f64, name: &'static str, ok: &dyn Fn(f64) -> bool| {
            match *bound {
                Bound::Asserted(v) if !ok(v) => Err(OperatorError::Hypothesis {
                    name,
                    asserted: v,
                    sampled,
                }),
                Bound::Asserted(_) => Ok(()),
                _ => {
                    *bound = Bound::Audited(sampled);
                    Ok(())
                }
            }
        };
        let (lo, hi, eps) = (rep.min_eig, rep.max_eig, rep.eps());
        settle(&mut self.c0, lo, "c0", &|v| v <= lo * (1.0 + tol))?;
        settle(&mut self.big_c0, hi, "C0", &|v| v >= hi * (1.0 - tol))?;
        settle(&mut self.eps, eps, "eps", &|v| v >= eps * (1.0 - tol) - tol)?;
        Ok(rep)
    }
}

fn agree_on_sample(a: &Expr, b: &Expr, n: usize) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..64).all(|_| {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        match (a.eval(&x), b.eval(&x)) {
            (Ok(u), Ok(v)) => (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1.0),
            (Err(_), Err(_)) => true,
            _ => false,
        }
    })
}

/// Uniform sample of the closure of `domain` by rejection.
fn sample_point(domain: &DomainSpec, dim: usize, rng: &mut ChaCha8Rng, x: &mut [f64]) {
    match domain {
        DomainSpec::Box { lo, hi } => {
            for k in 0..dim {
                x[k] = rng.gen_range(lo[k]..=hi[k]);
            }
        }
        DomainSpec::HalfBall { radius, .. } | DomainSpec::Ball { radius, .. } | DomainSpec::Radial { radius, .. } => {
            let half = matches!(domain, DomainSpec::HalfBall { .. });
            loop {
                for v in x.iter_mut() {
                    *v = rng.gen_range(-radius..=*radius);
                }
                if half {
                    x[dim - 1] = x[dim - 1].abs();
                }
                if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                    return;
                }
            }
        }
    }
}

/// `b^` sampled at every active node.
pub fn hat_b(spec: &CoefficientSpec, grid: &Arc<Grid>) -> Result<VecField, OperatorError> {
    let n = spec.dim();
    let mut out = VecField::zeros(grid, n);
    for i in 0..grid.node_count() {
        if grid.is_active(i) {
            let v = spec.hat_b_at(&grid.coords(i))?;
            out.at_mut(i).copy_from_slice(&v[..n]);
        }
    }
    Ok(out)
}

pub fn sqrt_spd(m: &SmallMat) -> Result<SmallMat, SpdError> {
    m.sqrt_spd()
}

/// `|p|_M = (p^T M p)^{1/2}`.
pub fn weighted_norm(p: &[f64], m: &SmallMat) -> Result<f64, SpdError> {
    let q = m.quad(p);
    let min_eig = m.min_eigenvalue();
    if !(min_eig > 0.0) {
        return Err(SpdError { min_eig });
    }
    Ok(q.max(0.0).sqrt())
}

/// `N_i = a_in(anchor) / sqrt(a_nn(anchor))`.
pub fn big_n(spec: &CoefficientSpec, anchor: &[f64]) -> Result<Vec<f64>, OperatorError> {
    let a = spec.a_at(anchor)?;
    let n = spec.dim();
    let ann = a.get(n - 1, n - 1);
    if !(ann > 0.0) {
        return Err(OperatorError::NotSpd {
            at: anchor.to_vec(),
            source: SpdError { min_eig: ann },
        });
    }
    Ok((0..n).map(|i| a.get(i, n - 1) / ann.sqrt()).collect())
}

/// Unit field `n = A0^{1/2} grad u / |grad u|_{A0}` and its mask (false
/// where `|grad u| <= tol`, the field is zero there).
pub fn n_field(a0: &SmallMat, grad: &VecField, tol: f64) -> Result<(VecField, Vec<bool>), SpdError> {
    let s0 = a0.sqrt_spd()?;
    let grid = grad.grid();
    let n = grad.components();
    let mut out = VecField::zeros(grid, n);
    let mut mask = vec![false; grid.node_count()];
    for i in 0..grid.node_count() {
        let g = grad.at(i);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !grid.is_active(i) || norm <= tol {
            continue;
        }
        let sg = s0.mul_vec(g);
        let len = sg[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..n {
            out.at_mut(i)[k] = sg[k] / len;
        }
        mask[i] = true;
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn spec(a: &[&[&str]], b: &[&str]) -> CoefficientSpec {
        let a: Vec<Vec<&str>> = a.iter().map(|r| r.to_vec()).collect();
        CoefficientSpec::from_strings(&a, b).unwrap()
    }

    #[test]
    fn hat_b_examples() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.25).unwrap();
        let s = spec(&[&["1 + x1", "0"], &["0", "1"]], &["0", "0"]);
        let hb = hat_b(&s, &g).unwrap();
        for &i in g.unknowns() {
            assert_eq!(hb.at(i), &[-1.0, 0.0]);
        }
        let s = spec(&[&["2", "0.5"], &["0.5", "3"]], &["1", "x2"]);
        let hb = hat_b(&s, &g).unwrap();
        for &i in g.unknowns() {
            assert_eq!(hb.at(i), &[1.0, g.coords(i)[1]]);
        }
        let s = spec(&[&["1", "0"], &["0", "1"]], &["1", "0"]);
        assert_eq!(s.hat_b_at(&[0.3, 0.2]).unwrap()[..2], [1.0, 0.0]);
    }

    #[test]
    fn asymmetry_rejected() {
        let a = vec![vec!["1", "x1"], vec!["x2", "1"]];
        let r = CoefficientSpec::from_strings(&a, &["0", "0"]);
        assert!(matches!(r, Err(OperatorError::Asymmetric { .. })));
        let a = vec![vec!["1", "2*x1"], vec!["x1*2", "1"]];
        assert!(CoefficientSpec::from_strings(&a, &["0", "0"]).is_ok());
    }

    #[test]
    fn big_n_examples() {
        let n = big_n(&CoefficientSpec::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(n, vec![0.0, 1.0]);
        let s = spec(&[&["2", "0"], &["0", "2"]], &["0", "0"]);
        let n = big_n(&s, &[0.0, 0.0]).unwrap();
        assert!((n[1] - 2f64.sqrt()).abs() < 1e-15 && n[0] == 0.0);
        let a = s.a_at(&[0.0, 0.0]).unwrap().inverse_spd().unwrap();
        assert!((a.quad(&n) - 1.0).abs() < 1e-12);
        let s = spec(&[&["1", "0.5"], &["0.5", "1"]], &["0", "0"]);
        assert_eq!(big_n(&s, &[0.0, 0.0]).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn n_field_examples() {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), 0.5).unwrap();
        let mut grad = VecField::zeros(&g, 2);
        grad.at_mut(4).copy_from_slice(&[0.0, 3.0]);
        grad.at_mut(5).copy_from_slice(&[1.0, 0.0]);
        let (n, mask) = n_field(&SmallMat::identity(2), &grad, 1e-12).unwrap();
        assert_eq!(n.at(4), &[0.0, 1.0]);
        assert!(!mask[0]);
        let (n, _) = n_field(&SmallMat::diag(&[4.0, 1.0]), &grad, 1e-12).unwrap();
        assert_eq!(n.at(5), &[1.0, 0.0]);
    }

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(weighted_norm(&[3.0, 4.0], &SmallMat::identity(2)).unwrap(), 5.0);
        assert_eq!(weighted_norm(&[1.0, 0.0], &SmallMat::diag(&[4.0, 1.0])).unwrap(), 2.0);
        let m = SmallMat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((weighted_norm(&[1.0, 1.0], &m).unwrap() - 6f64.sqrt()).abs() < 1e-15);
        assert!(weighted_norm(&[1.0, 1.0], &SmallMat::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn audit_bounds() {
        let mut s = spec(&[&["1 + 0.1*x1", "0"], &["0", "1"]], &["0", "0"]);
        let rep = s.audit(&DomainSpec::half_ball(2, 1.0), 10_000, 3).unwrap();
        let eps = s.eps.value().unwrap();
        assert!((eps - 0.1).abs() < 1e-12);
        assert!(rep.min_eig >= 0.9 - 1e-12 && rep.max_eig <= 1.1 + 1e-12);
        // finite differences of a_11 stay below the audited eps
        let h = 1e-6;
        let fd = (s.a_at(&[0.3 + h, 0.2]).unwrap().get(0, 0) - s.a_at(&[0.3 - h, 0.2]).unwrap().get(0, 0)) / (2.0 * h);
        assert!(fd <= eps + 1e-8);
        let mut bad = spec(&[&["x1", "0"], &["0", "1"]], &["0", "0"]);
        assert!(matches!(
            bad.audit(&DomainSpec::ball(2, 1.0), 1000, 1),
            Err(OperatorError::NotSpd { .. })
        ));
        let mut s = spec(&[&["1", "0"], &["0", "1"]], &["0", "0"]);
        s.c0 = Bound::Asserted(2.0);
        assert!(matches!(
            s.audit(&DomainSpec::ball(2, 1.0), 100, 1),
            Err(OperatorError::Hypothesis { .. })
        ));
    }
}
