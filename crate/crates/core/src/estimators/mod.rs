//! Functionals and inequalities evaluated on computed solutions. Every
//! check produces an `(lhs, rhs, ratio)` record.

mod curvature;
mod interp;
mod simon;
mod stability;
mod test_functions;
mod thm11;
mod thm12;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::exprlang::EvalError;
use crate::geometry::{gradient_hessian, FieldError, GeometryError, MatField, ScalarField, VecField};
use crate::linalg::SpdError;
use crate::operators::OperatorError;

pub use crate::operators::weighted_norm;
pub use curvature::{c_delta, curvature_a, phi_delta, CurvatureFields, PhiDelta};
pub use interp::{interpolation_props, DELTA_SWEEP};
pub use simon::{
    simon_absorption, BallFunctional, CertificateKind, FnFunctional, GradientEnergy, SimonCertificate, SimonOptions,
    SimonOutcome,
};
pub use stability::{stability_gap, stability_gap_boundary};
pub use test_functions::{Support, TestFunction};
pub use thm11::{levelset_step1, lemma31_l2l1, thm11_energy, thm11_gamma_default, LevelSetReport};
pub use thm12::{lemma21_checks, pohozaev_identity, thm12_suite, thm12_szz, Pohozaev, SzzTerms};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("test function support {0} is not inside the domain")]
    Support(String),
    #[error("c = {value:.3e} on the flat boundary at node {node}")]
    BoundaryValue { node: usize, value: f64 },
    #[error("not superharmonic: L u = {value:.3e} at node {node}")]
    NotSuperharmonic { node: usize, value: f64 },
    #[error("negative cut-off value {value:.3e} at node {node}")]
    Negative { node: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("subadditivity fails: sigma(B) = {whole:.6e} > {sum:.6e} for B = B_{radius}({center:?})")]
    Subadditivity {
        center: Vec<f64>,
        radius: f64,
        whole: f64,
        sum: f64,
    },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// One `(lhs, rhs)` comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub check: String,
    /// Label of the inequality being probed, e.g. `eq:szz`.
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub params: BTreeMap<String, String>,
    /// `ratio <= threshold` is required to pass when set.
    pub threshold: Option<f64>,
    pub pass: bool,
}

/// Tolerance for `rhs = 0`: `lhs` must then be below this times the scale.
const ZERO_RHS_REL: f64 = 1e-12;

impl ReportEntry {
    /// Builds an entry; `scale` is the size `lhs` is compared against when `rhs = 0`.
    pub fn new(check: &str, anchor: &str, lhs: f64, rhs: f64, scale: f64) -> Self {
        let (ratio, pass) = if rhs > 0.0 {
            (lhs / rhs, lhs.is_finite() && rhs.is_finite())
        } else if lhs.abs() <= ZERO_RHS_REL * scale.abs().max(1.0) {
            (0.0, true)
        } else {
            (f64::INFINITY, false)
        };
        Self {
            check: check.to_string(),
            anchor: anchor.to_string(),
            lhs,
            rhs,
            ratio,
            params: BTreeMap::new(),
            threshold: None,
            pass,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    /// Requires `ratio <= t` in addition to finiteness.
    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = Some(t);
        self.pass = self.pass && self.ratio <= t;
        self
    }

    pub fn fail(mut self, reason: &str) -> Self {
        self.pass = false;
        self.params.insert("failure".into(), reason.to_string());
        self
    }

    /// `k=v;k=v` in key order.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateReport {
    pub entries: Vec<ReportEntry>,
}

impl EstimateReport {
    pub fn push(&mut self, e: ReportEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: EstimateReport) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, check: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// `(grad u, D^2 u)` by finite differences.
pub fn grad_hessian(u: &ScalarField) -> (VecField, MatField) {
    gradient_hessian(u)
}

pub(crate) fn ensure_same(a: &ScalarField, b: &ScalarField) -> Result<(), EstimateError> {
    if a.grid().same_as(b.grid()) {
        Ok(())
    } else {
        Err(EstimateError::GridMismatch)
    }
}

/// Euclidean norm of the first `n` components.
pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
