use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{differentiate, parse, EvalError, Expr, ExprError, Signature};

/// Status of a structural property of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    /// True by construction of a named family.
    Asserted,
    /// Evaluated on a sample of the solution range.
    CheckedOnSample(bool),
    Unknown,
}

impl Flag {
    /// Asserted, or checked and true.
    pub fn holds(self) -> bool {
        matches!(self, Flag::Asserted | Flag::CheckedOnSample(true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub nonnegative: Flag,
    pub nondecreasing: Flag,
    pub convex: Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// `e^u`
    Exp,
    /// `(1+u)^p`
    Power(f64),
    /// `u`
    Linear,
    /// `0`
    Zero,
    Custom(String),
}

#[derive(Debug, Clone)]
enum Primitive {
    Symbolic(Expr),
    Numeric,
}

/// Right-hand side `f(u)` (optionally depending on `lambda`) with its
/// derivative and primitive `F(u) = int_0^u f`.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    f: Expr,
    fprime: Expr,
    primitive: Primitive,
    pub flags: Flags,
}

const SAMPLE_POINTS: usize = 1000;

impl Nonlinearity {
    /// Signature of every nonlinearity expression: `(u, lambda)`.
    pub fn signature() -> Arc<Signature> {
        Signature::new(&["u", "lambda"])
    }

    pub fn exp() -> Self {
        let s = Self::signature();
        Self::build(
            NonlinearityKind::Exp,
            "exp(u)",
            Some(parse("exp(u) - 1", &s).unwrap()),
            Flags {
                nonnegative: Flag::Asserted,
                nondecreasing: Flag::Asserted,
                convex: Flag::Asserted,
            },
        )
        .expect("built-in family")
    }

    /// `(1+u)^p`. Flags are asserted for `p >= 1` on `u >= -1`.
    pub fn power(p: f64) -> Self {
        let s = Self::signature();
        let src = format!("(1 + u)^{p:?}");
        let prim = if p != -1.0 {
            let q = p + 1.0;
            Some(parse(&format!("((1 + u)^{q:?} - 1)/{q:?}"), &s).unwrap())
        } else {
            None
        };
        let flag = if p >= 1.0 { Flag::Asserted } else { Flag::Unknown };
        Self::build(
            NonlinearityKind::Power(p),
            &src,
            prim,
            Flags {
                nonnegative: flag,
                nondecreasing: flag,
                convex: flag,
            },
        )
        .expect("built-in family")
    }

    pub fn linear() -> Self {
        let s = Self::signature();
        Self::build(
            NonlinearityKind::Linear,
            "u",
            Some(parse("0.5*u^2", &s).unwrap()),
            Flags {
                nonnegative: Flag::Unknown,
                nondecreasing: Flag::Asserted,
                convex: Flag::Asserted,
            },
        )
        .expect("built-in family")
    }

    pub fn zero() -> Self {
        let s = Self::signature();
        Self::build(
            NonlinearityKind::Zero,
            "0",
            Some(parse("0", &s).unwrap()),
            Flags {
                nonnegative: Flag::Asserted,
                nondecreasing: Flag::Asserted,
                convex: Flag::Asserted,
            },
        )
        .expect("built-in family")
    }

    /// User formula in `u` (and optionally `lambda`); primitive is numeric and
    /// every flag starts as unknown.
    pub fn custom(source: &str) -> Result<Self, ExprError> {
        Self::build(
            NonlinearityKind::Custom(source.to_string()),
            source,
            None,
            Flags {
                nonnegative: Flag::Unknown,
                nondecreasing: Flag::Unknown,
                convex: Flag::Unknown,
            },
        )
    }

    fn build(
        kind: NonlinearityKind,
        src: &str,
        primitive: Option<Expr>,
        flags: Flags,
    ) -> Result<Self, ExprError> {
        let f = parse(src, &Self::signature())?;
        let fprime = differentiate(&f, "u")?;
        Ok(Self {
            kind,
            f,
            fprime,
            primitive: primitive.map(Primitive::Symbolic).unwrap_or(Primitive::Numeric),
            flags,
        })
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    pub fn derivative_expr(&self) -> &Expr {
        &self.fprime
    }

    pub fn is_zero(&self) -> bool {
        self.kind == NonlinearityKind::Zero
    }

    pub fn f(&self, u: f64, lambda: f64) -> Result<f64, EvalError> {
        self.f.eval(&[u, lambda])
    }

    pub fn fprime(&self, u: f64, lambda: f64) -> Result<f64, EvalError> {
        self.fprime.eval(&[u, lambda])
    }

    pub fn has_symbolic_primitive(&self) -> bool {
        matches!(self.primitive, Primitive::Symbolic(_))
    }

    /// `F(u) = int_0^u f(s, lambda) ds`.
    pub fn primitive(&self, u: f64, lambda: f64) -> Result<f64, EvalError> {
        match &self.primitive {
            Primitive::Symbolic(e) => e.eval(&[u, lambda]),
            Primitive::Numeric => {
                let g = |s: f64| self.f(s, lambda);
                adaptive_simpson(&g, 0.0, u, 1e-10)
            }
        }
    }

    /// Largest relative gap between `fprime` and central differences of `f`
    /// over `samples` points drawn uniformly from `[lo, hi]`.
    pub fn derivative_check(&self, lo: f64, hi: f64, lambda: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let u = rng.gen_range(lo..=hi);
            let h = 1e-6 * (1.0 + u.abs());
            let (Ok(fp), Ok(fm), Ok(d)) = (
                self.f(u + h, lambda),
                self.f(u - h, lambda),
                self.fprime(u, lambda),
            ) else {
                continue;
            };
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - d).abs() / d.abs().max(1.0));
        }
        worst
    }

    /// Resolves every non-asserted flag on a 1e3-point uniform sample of
    /// `[lo, hi]`. Evaluation failures count as violations.
    pub fn check_flags(&mut self, lo: f64, hi: f64, lambda: f64) {
        let pts: Vec<f64> = (0..SAMPLE_POINTS)
            .map(|k| lo + (hi - lo) * k as f64 / (SAMPLE_POINTS - 1) as f64)
            .collect();
        let vals: Vec<Option<(f64, f64)>> = pts
            .iter()
            .map(|&u| Some((self.f(u, lambda).ok()?, self.fprime(u, lambda).ok()?)))
            .collect();
        let tol = 1e-12;
        let scale = vals
            .iter()
            .flatten()
            .map(|v| v.1.abs())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let nonneg = vals.iter().all(|v| matches!(v, Some((f, _)) if *f >= -tol));
        let nondec = vals.iter().all(|v| matches!(v, Some((_, d)) if *d >= -tol * scale));
        let convex = vals
            .windows(2)
            .all(|w| matches!(w, [Some((_, a)), Some((_, b))] if *b >= *a - tol * scale));
        let set = |flag: &mut Flag, ok: bool| {
            if *flag != Flag::Asserted {
                *flag = Flag::CheckedOnSample(ok);
            }
        };
        set(&mut self.flags.nonnegative, nonneg);
        set(&mut self.flags.nondecreasing, nondec);
        set(&mut self.flags.convex, convex);
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature with Richardson correction.
fn adaptive_simpson<F>(f: &F, a: f64, b: f64, rtol: f64) -> Result<f64, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a)?, f(b)?);
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(fa, fm, fb, a, b);
    // Absolute floor keeps the recursion finite when the integral is ~0.
    let tol = (rtol * whole.abs()).max(1e-15);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, EvalError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_have_consistent_derivatives() {
        for nl in [
            Nonlinearity::exp(),
            Nonlinearity::power(2.0),
            Nonlinearity::power(3.0),
            Nonlinearity::linear(),
            Nonlinearity::zero(),
            Nonlinearity::custom("lambda*u^2 + exp(-u)").unwrap(),
        ] {
            assert!(nl.derivative_check(0.0, 3.0, 0.7, 500, 1) <= 1e-6, "{:?}", nl.kind());
        }
    }

    #[test]
    fn symbolic_primitive_differentiates_to_f() {
        for nl in [Nonlinearity::exp(), Nonlinearity::power(2.0), Nonlinearity::linear()] {
            assert_eq!(nl.primitive(0.0, 1.0).unwrap(), 0.0);
            for k in 0..20 {
                let u = 0.1 * k as f64;
                let h = 1e-5;
                let fd = (nl.primitive(u + h, 1.0).unwrap() - nl.primitive(u - h, 1.0).unwrap()) / (2.0 * h);
                let f = nl.f(u, 1.0).unwrap();
                assert!((fd - f).abs() <= 1e-8 * f.abs().max(1.0));
            }
        }
    }

    #[test]
    fn numeric_primitive_matches_closed_form() {
        let nl = Nonlinearity::custom("exp(u)").unwrap();
        assert!(!nl.has_symbolic_primitive());
        for u in [-1.0, 0.3, 2.0, 5.0] {
            let got = nl.primitive(u, 0.0).unwrap();
            let want: f64 = u.exp() - 1.0;
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300), "{u}: {got} {want}");
        }
    }

    #[test]
    fn sampled_flags() {
        let mut nl = Nonlinearity::custom("u^2").unwrap();
        nl.check_flags(0.0, 2.0, 1.0);
        assert_eq!(nl.flags.nonnegative, Flag::CheckedOnSample(true));
        assert_eq!(nl.flags.nondecreasing, Flag::CheckedOnSample(true));
        assert_eq!(nl.flags.convex, Flag::CheckedOnSample(true));
        let mut nl = Nonlinearity::custom("sin(u)").unwrap();
        nl.check_flags(0.0, 4.0, 1.0);
        assert_eq!(nl.flags.nonnegative, Flag::CheckedOnSample(false));
        assert_eq!(nl.flags.nondecreasing, Flag::CheckedOnSample(false));
        assert_eq!(nl.flags.convex, Flag::CheckedOnSample(false));
        let mut nl = Nonlinearity::exp();
        nl.check_flags(-1.0, 1.0, 1.0);
        assert_eq!(nl.flags.convex, Flag::Asserted);
    }
}
