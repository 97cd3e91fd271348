//! Solutions of `-L u = lambda f(u) + g` with zero Dirichlet data, the
//! principal eigenvalue of `J_u`, continuation in `lambda`.

mod branch;
mod eigen;
mod monotone;
mod newton;
mod singular;

use std::sync::Arc;

use thiserror::Error;

use crate::exprlang::{differentiate, EvalError, Expr, Nonlinearity, Signature};
use crate::geometry::{Grid, ScalarField};
use crate::linalg::LinalgError;
use crate::operators::{assemble_ju, assemble_l, CoefficientSpec, DiscreteOperator, OperatorError};

pub use branch::{trace_branch, ArclengthPolicy, Branch, BranchPoint, BranchPolicy, Segment, Termination};
pub use eigen::{principal_eigenvalue, Eigenpair};
pub use monotone::{monotone_iteration, MonotoneResult};
pub use newton::{solve_newton, NewtonSolution};
pub use singular::{radial_singular_stability, RadialStability};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("lambda must be finite and >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("Newton diverged: residual {residual:.3e} not reduced after {halvings} halvings (iteration {iteration})")]
    Divergence {
        iteration: usize,
        residual: f64,
        halvings: usize,
    },
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("nonlinearity evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("eigen-iteration stagnated after {iterations} iterations (change {change:.3e}, residual {residual:.3e})")]
    Stagnation {
        iterations: usize,
        change: f64,
        residual: f64,
    },
    #[error("eigenvector not positive: min {min:.3e} at unknown {index}")]
    NotPositive { min: f64, index: usize },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error("dimension {0} outside 3..=15")]
    DimensionRange(usize),
}

/// Solver tolerances; every field can be overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub newton_rtol: f64,
    pub newton_max_iter: usize,
    pub newton_max_halvings: usize,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
    pub monotone_tol: f64,
    pub monotone_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_rtol: 1e-10,
            newton_max_iter: 50,
            newton_max_halvings: 10,
            eig_tol: 1e-10,
            eig_max_iter: 2000,
            monotone_tol: 1e-8,
            monotone_max_iter: 20_000,
        }
    }
}

/// A fully validated problem `-L u = lambda f(u) + g`.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Arc<Grid>,
    spec: CoefficientSpec,
    op: Arc<DiscreteOperator>,
    f: Nonlinearity,
    /// `d f / d lambda` for nonlinearities that mention `lambda`.
    f_lambda: Option<Expr>,
    lambda: f64,
    /// Source on the unknowns.
    source: Option<Vec<f64>>,
    pub tol: Tolerances,
}

impl Problem {
    /// Audits the coefficients when needed and assembles `L_h`.
    pub fn new(
        grid: &Arc<Grid>,
        mut spec: CoefficientSpec,
        f: Nonlinearity,
        lambda: f64,
    ) -> Result<Self, SolverError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SolverError::NegativeLambda(lambda));
        }
        if !spec.is_audited() {
            spec.audit(grid.domain(), 10_000, 0)?;
        }
        let op = Arc::new(assemble_l(&spec, grid)?);
        let f_lambda = if f.expr().depends_on("lambda") {
            Some(differentiate(f.expr(), "lambda").map_err(OperatorError::from)?)
        } else {
            None
        };
        Ok(Self {
            grid: grid.clone(),
            spec,
            op,
            f,
            f_lambda,
            lambda,
            source: None,
            tol: Tolerances::default(),
        })
    }

    /// Adds a source `g` (values at the unknowns are used).
    pub fn with_source(mut self, g: &ScalarField) -> Result<Self, SolverError> {
        if !g.grid().same_as(&self.grid) {
            return Err(SolverError::GridMismatch);
        }
        self.source = Some(g.unknown_values());
        Ok(self)
    }

    /// Source `g = -L u_e - lambda f(u_e)` that makes `u_e` (an expression
    /// in `x1..xn`) the exact solution of the continuous problem.
    pub fn with_manufactured(self, exact: &Expr) -> Result<Self, SolverError> {
        let n = self.spec.dim();
        if self.grid.is_radial() {
            return Err(OperatorError::Unsupported("manufactured sources need a Cartesian grid".into()).into());
        }
        let sig = Signature::coords(n);
        if **exact.signature() != *sig {
            return Err(OperatorError::Expr(crate::exprlang::ExprError::SignatureMismatch).into());
        }
        let mut d1 = Vec::new();
        let mut d2 = vec![Vec::new(); n];
        for i in 0..n {
            let di = differentiate(exact, &format!("x{}", i + 1)).map_err(OperatorError::from)?;
            for j in 0..n {
                d2[i].push(differentiate(&di, &format!("x{}", j + 1)).map_err(OperatorError::from)?);
            }
            d1.push(di);
        }
        let mut g = vec![0.0; self.grid.node_count()];
        for &p in self.grid.unknowns() {
            let x = self.grid.coords(p);
            let x = &x[..n];
            let a = self.spec.a_at(x)?;
            let b = self.spec.b_at(x)?;
            let mut lu = 0.0;
            for i in 0..n {
                lu += b[i] * d1[i].eval(x)?;
                for j in 0..n {
                    lu += a.get(i, j) * d2[i][j].eval(x)?;
                }
            }
            let ue = exact.eval(x)?;
            g[p] = -lu - self.lambda * self.f.f(ue, self.lambda)?;
        }
        let field = ScalarField::from_values(&self.grid, g).map_err(|e| SolverError::Hypothesis(e.to_string()))?;
        self.with_source(&field)
    }

    /// Same problem at another `lambda` (operator shared).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, SolverError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SolverError::NegativeLambda(lambda));
        }
        let mut p = self.clone();
        p.lambda = lambda;
        Ok(p)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }
    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }
    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.f
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// `L_h u + lambda f(u) + g` on the unknowns.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.residual_at(u, self.lambda)
    }

    pub(crate) fn residual_at(&self, u: &[f64], lambda: f64) -> Result<Vec<f64>, SolverError> {
        let mut r = self.op.matrix().matvec(u);
        for (k, rk) in r.iter_mut().enumerate() {
            *rk += lambda * self.f.f(u[k], lambda)?;
            if let Some(g) = &self.source {
                *rk += g[k];
            }
        }
        Ok(r)
    }

    /// `||lambda f(u) + g||_inf`, the scale of the residual.
    pub(crate) fn rhs_scale(&self, u: &[f64], lambda: f64) -> Result<f64, SolverError> {
        let mut m: f64 = 0.0;
        for (k, &v) in u.iter().enumerate() {
            let s = lambda * self.f.f(v, lambda)? + self.source.as_ref().map_or(0.0, |g| g[k]);
            m = m.max(s.abs());
        }
        Ok(m)
    }

    /// `dR/dlambda = f(u) + lambda df/dlambda`.
    pub(crate) fn d_lambda(&self, u: &[f64], lambda: f64) -> Result<Vec<f64>, SolverError> {
        u.iter()
            .map(|&v| {
                let extra = match &self.f_lambda {
                    Some(e) => lambda * e.eval(&[v, lambda])?,
                    None => 0.0,
                };
                Ok(self.f.f(v, lambda)? + extra)
            })
            .collect()
    }

    pub fn jacobian(&self, u: &ScalarField) -> Result<DiscreteOperator, SolverError> {
        Ok(assemble_ju(&self.op, &self.f, self.lambda, u)?)
    }

    pub(crate) fn jacobian_at(&self, u: &[f64], lambda: f64) -> Result<crate::linalg::CsrMatrix, SolverError> {
        let d = u
            .iter()
            .map(|&v| Ok(lambda * self.f.fprime(v, lambda)?))
            .collect::<Result<Vec<f64>, SolverError>>()?;
        Ok(self.op.matrix().add_diagonal(&d))
    }
}
