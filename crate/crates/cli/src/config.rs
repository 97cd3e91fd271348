//! JSON run configuration. Every block has defaults; unknown keys are
//! rejected.
//!
//! ```json
//! {
//!   "run_id": "gelfand-2d",
//!   "seed": 0,
//!   "problem": {
//!     "domain": { "kind": "half_ball", "dim": 2, "radius": 1.0 },
//!     "coefficients": { "a": [["1", "0"], ["0", "1"]], "b": ["0", "0"] },
//!     "nonlinearity": { "kind": "exp" },
//!     "lambda_fraction": 0.5
//!   },
//!   "grid": { "h": 0.015625 },
//!   "estimators": { "eps0": 0.1 },
//!   "output": { "dir": "out" }
//! }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stablab::exprlang::Nonlinearity;
use stablab::geometry::DomainSpec;
use stablab::operators::CoefficientSpec;
use stablab::solver::{ArclengthPolicy, BranchPolicy};

use crate::HarnessError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// First CSV column of every row. Default `"run"`.
    #[serde(default = "default_run_id")]
    pub run_id: String,
    /// Seed for all randomized sampling (audits, Simon spot checks). Default 0.
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Universality family; `verify` runs every member when present.
    #[serde(default)]
    pub family: Option<FamilyConfig>,
}

fn default_run_id() -> String {
    "run".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    HalfBall {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Ball {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Radially symmetric ball; only `A = I`, `b = 0` is supported.
    Radial {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DomainConfig {
    pub fn spec(&self) -> DomainSpec {
        match self {
            DomainConfig::HalfBall { dim, radius } => DomainSpec::half_ball(*dim, *radius),
            DomainConfig::Ball { dim, radius } => DomainSpec::ball(*dim, *radius),
            DomainConfig::Box { lo, hi } => DomainSpec::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            DomainConfig::Radial { dim, radius } => DomainSpec::radial(*dim, *radius),
        }
    }

    /// Number of coordinates the coefficients depend on.
    pub fn coefficient_dim(&self) -> usize {
        match self {
            DomainConfig::Radial { .. } => 1,
            DomainConfig::Box { lo, .. } => lo.len(),
            DomainConfig::HalfBall { dim, .. } | DomainConfig::Ball { dim, .. } => *dim,
        }
    }

    pub fn is_half_ball(&self) -> bool {
        matches!(self, DomainConfig::HalfBall { .. })
    }
}

/// `A` as a full matrix of expressions in `x1..xn`, `b` as a vector.
/// Omitted means `A = I`, `b = 0`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub a: Vec<Vec<String>>,
    #[serde(default)]
    pub b: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityConfig {
    /// `e^u`
    Exp,
    /// `(1+u)^p`
    Power { p: f64 },
    /// `u`
    Linear,
    Zero,
    /// Formula in `u` and `lambda`.
    Custom { expr: String },
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<Nonlinearity, HarnessError> {
        Ok(match self {
            NonlinearityConfig::Exp => Nonlinearity::exp(),
            NonlinearityConfig::Power { p } => Nonlinearity::power(*p),
            NonlinearityConfig::Linear => Nonlinearity::linear(),
            NonlinearityConfig::Zero => Nonlinearity::zero(),
            NonlinearityConfig::Custom { expr } => {
                Nonlinearity::custom(expr).map_err(|e| HarnessError::Config(format!("nonlinearity: {e}")))?
            }
        })
    }

    /// Short tag used in family run ids.
    pub fn tag(&self) -> String {
        match self {
            NonlinearityConfig::Exp => "exp".into(),
            NonlinearityConfig::Power { p } => format!("pow{p}"),
            NonlinearityConfig::Linear => "linear".into(),
            NonlinearityConfig::Zero => "zero".into(),
            NonlinearityConfig::Custom { .. } => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub coefficients: Option<CoefficientConfig>,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearityConfig,
    /// Fixed `lambda`. Default 0 unless `lambda_fraction` is given.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// `lambda = fraction * lambda*`, with `lambda*` from a traced branch.
    #[serde(default)]
    pub lambda_fraction: Option<f64>,
    /// Exact solution (expression in `x1..xn`); adds the matching source.
    #[serde(default)]
    pub manufactured: Option<String>,
    /// Sample this expression instead of solving.
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub branch: BranchConfig,
}

fn default_nonlinearity() -> NonlinearityConfig {
    NonlinearityConfig::Exp
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchConfig {
    /// 0.1
    pub initial_step: f64,
    /// 0.5
    pub max_step: f64,
    /// 1e-6
    pub min_step_rel: f64,
    /// 10000
    pub max_points: usize,
    /// Unbounded.
    pub lambda_max: Option<f64>,
    /// 1e-6
    pub eig_rel: f64,
    /// Follow the upper branch past the fold. Default false.
    pub arclength: bool,
    /// 0.1
    pub arclength_ds: f64,
    /// 200
    pub arclength_max_points: usize,
    /// 20
    pub arclength_max_u: f64,
}

impl Default for BranchConfig {
    fn default() -> Self {
        let p = BranchPolicy::default();
        let a = ArclengthPolicy::default();
        Self {
            initial_step: p.initial_step,
            max_step: p.max_step,
            min_step_rel: p.min_step_rel,
            max_points: p.max_points,
            lambda_max: None,
            eig_rel: p.eig_rel,
            arclength: false,
            arclength_ds: a.ds,
            arclength_max_points: a.max_points,
            arclength_max_u: a.max_u,
        }
    }
}

impl BranchConfig {
    pub fn policy(&self) -> BranchPolicy {
        BranchPolicy {
            initial_step: self.initial_step,
            max_step: self.max_step,
            min_step_rel: self.min_step_rel,
            max_points: self.max_points,
            lambda_max: self.lambda_max.unwrap_or(f64::INFINITY),
            eig_rel: self.eig_rel,
            arclength: self.arclength.then(|| ArclengthPolicy {
                ds: self.arclength_ds,
                max_points: self.arclength_max_points,
                max_u: self.arclength_max_u,
            }),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Spacing of the coarsest level. Default 1/32.
    pub h: f64,
    /// Levels used by `convergence` (h, h/2, ...). Default 3.
    pub refinements: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 32.0,
            refinements: 3,
        }
    }
}

/// Names accepted in `estimators.checks`.
pub const CHECKS: [&str; 12] = [
    "stability",
    "stability_boundary",
    "thm12",
    "szz",
    "lemma21",
    "pohozaev",
    "thm11",
    "lemma31",
    "levelset",
    "curvature",
    "interpolation",
    "simon",
];

/// Checks that need a half-ball grid.
pub const HALF_BALL_CHECKS: [&str; 9] = [
    "stability_boundary",
    "thm12",
    "szz",
    "lemma21",
    "pohozaev",
    "thm11",
    "lemma31",
    "levelset",
    "simon",
];

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Subset of [`CHECKS`]. Default: every check the domain supports.
    pub checks: Option<Vec<String>>,
    /// Integrability gain. Default `0.5 * 4 / (3n - 2)`.
    pub gamma: Option<f64>,
    /// `thm12` rows fail when the audited eps exceeds this. Default 0.1.
    pub eps0: f64,
    /// Multiples of `max |grad u|` used as `delta` for `c_delta`.
    /// Default `[1e-1, 1e-2, 1e-3]`.
    pub delta_sweep: Vec<f64>,
    /// Interpolation constant. Default 100.
    pub c_test: f64,
    /// Level-set quantiles. Default 32.
    pub levels: usize,
    /// `C` in the discrete stability slack `C h rhs`. Default 1.
    pub stability_slack: f64,
    /// Pohozaev rows pass when `|lhs - rhs| <= C h max(|lhs|, |rhs|)`. Default 10.
    pub pohozaev_slack: f64,
    /// Regression: pass requires `ratio <= factor * reference`. Default 10.
    pub regression_factor: f64,
    /// Family spread: `max <= factor * median`. Default 10.
    pub spread_factor: f64,
    /// Cutoff `eta` (equal to one inside, zero outside) used by the
    /// boundary checks. Default `[0.5, 0.9]`.
    pub cutoff: [f64; 2],
    /// Simon absorption parameters. Defaults `beta = 0`, `delta = 0.01`.
    pub simon_beta: f64,
    pub simon_delta: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            checks: None,
            gamma: None,
            eps0: 0.1,
            delta_sweep: vec![1e-1, 1e-2, 1e-3],
            c_test: 100.0,
            levels: 32,
            stability_slack: 1.0,
            pohozaev_slack: 10.0,
            regression_factor: 10.0,
            spread_factor: 10.0,
            cutoff: [0.5, 0.9],
            simon_beta: 0.0,
            simon_delta: 0.01,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory, relative to the config file. Overridden by `--out`.
    /// Default `"out"`.
    pub dir: PathBuf,
    /// Regression fixtures, relative to the config file. Default none.
    pub fixtures: Option<PathBuf>,
    /// File names inside `dir`.
    pub solution: String,
    pub summary: String,
    pub branch: String,
    pub report: String,
    pub convergence: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            fixtures: None,
            solution: "solution.stbl".into(),
            summary: "summary.csv".into(),
            branch: "branch.csv".into(),
            report: "report.csv".into(),
            convergence: "convergence.csv".into(),
        }
    }
}

/// Members are all combinations of the three lists.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub nonlinearities: Vec<NonlinearityConfig>,
    pub lambda_fractions: Vec<f64>,
    /// `eps` adds `eps * x1` to `a_11`.
    pub perturbations: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let p = &self.problem;
        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            return bad(format!("grid.h must be positive, got {}", self.grid.h));
        }
        if p.lambda.is_some() && p.lambda_fraction.is_some() {
            return bad("problem.lambda and problem.lambda_fraction are exclusive".into());
        }
        if p.field.is_some() && (p.manufactured.is_some() || p.lambda_fraction.is_some()) {
            return bad("problem.field excludes manufactured and lambda_fraction".into());
        }
        if let Some(f) = p.lambda_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("lambda_fraction must lie in (0, 1], got {f}"));
            }
        }
        if let Some(l) = p.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be nonnegative, got {l}"));
            }
        }
        if let DomainConfig::Radial { .. } = p.domain {
            if p.coefficients.is_some() {
                return bad("radial domains take no coefficients".into());
            }
        }
        if let Some(checks) = &self.estimators.checks {
            let mut seen = BTreeSet::new();
            for c in checks {
                if !CHECKS.contains(&c.as_str()) {
                    return bad(format!("unknown check {c:?}; expected one of {CHECKS:?}"));
                }
                if !seen.insert(c) {
                    return bad(format!("check {c:?} listed twice"));
                }
                if HALF_BALL_CHECKS.contains(&c.as_str()) && !p.domain.is_half_ball() {
                    return bad(format!("check {c:?} needs a half_ball domain"));
                }
                if c == "stability" && matches!(p.domain, DomainConfig::Radial { .. }) {
                    return bad("check \"stability\" needs a Cartesian domain".into());
                }
            }
        }
        if let Some(fam) = &self.family {
            if fam.nonlinearities.is_empty() || fam.lambda_fractions.is_empty() || fam.perturbations.is_empty() {
                return bad("family lists must be non-empty".into());
            }
            if p.field.is_some() || p.manufactured.is_some() {
                return bad("family runs solve the problem; remove field/manufactured".into());
            }
            if let Some(f) = fam.lambda_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                return bad(format!("family lambda fraction {f} outside (0, 1]"));
            }
        }
        if self.grid.refinements == 0 {
            return bad("grid.refinements must be at least 1".into());
        }
        Ok(())
    }

    /// Enabled checks in canonical order.
    pub fn checks(&self) -> Vec<&'static str> {
        match &self.estimators.checks {
            Some(list) => CHECKS.iter().copied().filter(|c| list.iter().any(|l| l == c)).collect(),
            None => CHECKS
                .iter()
                .copied()
                .filter(|c| match self.problem.domain {
                    DomainConfig::HalfBall { .. } => true,
                    DomainConfig::Radial { .. } => false,
                    DomainConfig::Box { .. } | DomainConfig::Ball { .. } => *c == "stability" || *c == "curvature" || *c == "interpolation",
                })
                .collect(),
        }
    }

    /// Coefficients with `eps * x1` added to `a_11`.
    pub fn coefficients(&self, perturbation: f64) -> Result<CoefficientSpec, HarnessError> {
        let n = self.problem.domain.coefficient_dim();
        let (mut a, b) = match &self.problem.coefficients {
            None => (
                (0..n)
                    .map(|i| (0..n).map(|j| if i == j { "1".to_string() } else { "0".to_string() }).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                vec!["0".to_string(); n],
            ),
            Some(c) => (c.a.clone(), c.b.clone().unwrap_or_else(|| vec!["0".to_string(); n])),
        };
        if a.len() != n || b.len() != n {
            return Err(HarnessError::Config(format!("coefficients must be {n}x{n} with {n} drift entries")));
        }
        if perturbation != 0.0 {
            a[0][0] = format!("({}) + {perturbation:?}*x1", a[0][0]);
        }
        let spec = CoefficientSpec::from_strings(&a, &b).map_err(|e| HarnessError::Config(format!("coefficients: {e}")))?;
        if self.problem.coefficients.is_none() && perturbation == 0.0 {
            return Ok(CoefficientSpec::identity(n));
        }
        Ok(spec)
    }
}
