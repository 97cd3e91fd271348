//! A deliberately small expression language.
//!
//! Grammar (highest precedence first):
//!
//! ```text
//! primary := number | ident | ident '(' args ')' | '(' expr ')'
//! power   := primary ('^' unary)?          right associative
//! unary   := '-' unary | power
//! term    := unary (('*' | '/') unary)*
//! expr    := term (('+' | '-') term)*
//! ```
//!
//! Functions: `exp log sqrt abs sign sin cos` (one argument), `min max`
//! (two arguments). The identifier `pi` is a constant unless the signature
//! declares a variable of that name. Numbers are decimal literals with an
//! optional exponent (`1.5e-3`).

mod diff;
mod nonlinearity;
mod parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use diff::differentiate;
pub use nonlinearity::{Flag, Flags, Nonlinearity, NonlinearityKind};
pub use parse::parse;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` expects {expected} argument(s), got {got} (byte {offset})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        offset: usize,
    },
    #[error("variable `{0}` is not declared in the signature")]
    UndeclaredVariable(String),
    #[error("signatures differ")]
    SignatureMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error in {op} (argument {arg})")]
    Domain { op: &'static str, arg: f64 },
    #[error("expected {expected} variable values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("point {index}: {source}")]
pub struct BatchError {
    pub index: usize,
    pub source: EvalError,
}

/// Ordered list of variable names an expression may reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    names: Vec<String>,
}

impl Signature {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Arc<Self> {
        Arc::new(Self {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    /// `x1 .. xn`.
    pub fn coords(n: usize) -> Arc<Self> {
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        Self::new(&names)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Sin,
    Cos,
}

impl UnaryOp {
    pub(crate) fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Sign => "sign",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "sign" => UnaryOp::Sign,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// Immutable expression tree bound to a [`Signature`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    sig: Arc<Signature>,
    root: Node,
}

fn check(op: &'static str, arg: f64, value: f64) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::Domain { op, arg })
    }
}

impl Node {
    fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Var(i) => Ok(vars[*i]),
            Node::Unary(op, a) => {
                let x = a.eval(vars)?;
                match op {
                    UnaryOp::Neg => Ok(-x),
                    UnaryOp::Exp => check("exp", x, x.exp()),
                    UnaryOp::Log => {
                        if x <= 0.0 {
                            Err(EvalError::Domain { op: "log", arg: x })
                        } else {
                            Ok(x.ln())
                        }
                    }
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            Err(EvalError::Domain { op: "sqrt", arg: x })
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                    UnaryOp::Abs => Ok(x.abs()),
                    UnaryOp::Sign => Ok(if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }),
                    UnaryOp::Sin => Ok(x.sin()),
                    UnaryOp::Cos => Ok(x.cos()),
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinaryOp::Add => check("+", x, x + y),
                    BinaryOp::Sub => check("-", x, x - y),
                    BinaryOp::Mul => check("*", x, x * y),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            Err(EvalError::Domain { op: "/", arg: y })
                        } else {
                            check("/", y, x / y)
                        }
                    }
                    BinaryOp::Pow => check("^", x, x.powf(y)),
                    BinaryOp::Min => Ok(x.min(y)),
                    BinaryOp::Max => Ok(x.max(y)),
                }
            }
        }
    }

    fn depends_on(&self, var: usize) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(i) => *i == var,
            Node::Unary(_, a) => a.depends_on(var),
            Node::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    fn substitute(&self, var: usize, with: &Node) -> Node {
        match self {
            Node::Var(i) if *i == var => with.clone(),
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Unary(op, a) => Node::Unary(*op, Box::new(a.substitute(var, with))),
            Node::Binary(op, a, b) => Node::Binary(
                *op,
                Box::new(a.substitute(var, with)),
                Box::new(b.substitute(var, with)),
            ),
        }
    }

    pub(crate) fn as_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }
}

impl Expr {
    pub fn from_node(sig: Arc<Signature>, root: Node) -> Self {
        Self { sig, root }
    }

    pub fn constant(sig: Arc<Signature>, c: f64) -> Self {
        Self::from_node(sig, Node::Const(c))
    }

    pub fn var(sig: &Arc<Signature>, name: &str) -> Result<Self, ExprError> {
        let i = sig
            .index_of(name)
            .ok_or_else(|| ExprError::UndeclaredVariable(name.to_string()))?;
        Ok(Self::from_node(sig.clone(), Node::Var(i)))
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// Value at one point; `vars` follows the signature order.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        if vars.len() != self.sig.len() {
            return Err(EvalError::Arity {
                expected: self.sig.len(),
                got: vars.len(),
            });
        }
        self.root.eval(vars)
    }

    pub fn as_const(&self) -> Option<f64> {
        self.root.as_const()
    }

    pub fn depends_on(&self, name: &str) -> bool {
        self.sig
            .index_of(name)
            .map(|i| self.root.depends_on(i))
            .unwrap_or(false)
    }

    /// Replaces every occurrence of `name` by `with` (same signature).
    pub fn substitute(&self, name: &str, with: &Expr) -> Result<Expr, ExprError> {
        if self.sig != with.sig {
            return Err(ExprError::SignatureMismatch);
        }
        let i = self
            .sig
            .index_of(name)
            .ok_or_else(|| ExprError::UndeclaredVariable(name.to_string()))?;
        Ok(Self::from_node(self.sig.clone(), self.root.substitute(i, &with.root)))
    }

    fn combine(&self, other: &Expr, f: impl FnOnce(Node, Node) -> Node) -> Expr {
        debug_assert_eq!(self.sig, other.sig);
        Expr::from_node(self.sig.clone(), f(self.root.clone(), other.root.clone()))
    }

    pub fn add(&self, o: &Expr) -> Expr {
        self.combine(o, diff::add)
    }
    pub fn sub(&self, o: &Expr) -> Expr {
        self.combine(o, diff::sub)
    }
    pub fn mul(&self, o: &Expr) -> Expr {
        self.combine(o, diff::mul)
    }
    pub fn neg(&self) -> Expr {
        Expr::from_node(self.sig.clone(), diff::neg(self.root.clone()))
    }
    pub fn scale(&self, c: f64) -> Expr {
        Expr::from_node(self.sig.clone(), diff::mul(Node::Const(c), self.root.clone()))
    }
}

/// Evaluates `e` at each binding; the first failure carries its index.
pub fn evaluate_batch(e: &Expr, points: &[Vec<f64>]) -> Result<Vec<f64>, BatchError> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| e.eval(p).map_err(|source| BatchError { index, source }))
        .collect()
}

// Printing. Precedence levels: 1 additive, 2 multiplicative, 3 unary minus,
// 4 power, 5 atoms. Operands are parenthesised whenever re-parsing would
// otherwise regroup them, so the printed tree has the same shape.

fn prec(node: &Node) -> u8 {
    match node {
        Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
        Node::Const(_) | Node::Var(_) => 5,
        Node::Unary(UnaryOp::Neg, _) => 3,
        Node::Unary(_, _) => 5,
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        Node::Binary(BinaryOp::Pow, _, _) => 4,
        Node::Binary(BinaryOp::Min | BinaryOp::Max, _, _) => 5,
    }
}

struct Printer<'a> {
    sig: &'a Signature,
}

impl Printer<'_> {
    fn write(&self, f: &mut fmt::Formatter<'_>, node: &Node, min_prec: u8) -> fmt::Result {
        if prec(node) < min_prec {
            write!(f, "(")?;
            self.write_bare(f, node)?;
            write!(f, ")")
        } else {
            self.write_bare(f, node)
        }
    }

    fn write_bare(&self, f: &mut fmt::Formatter<'_>, node: &Node) -> fmt::Result {
        match node {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "-{:?}", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(i) => write!(f, "{}", self.sig.names[*i]),
            Node::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                self.write(f, a, 3)
            }
            Node::Unary(op, a) => {
                write!(f, "{}(", op.name())?;
                self.write(f, a, 0)?;
                write!(f, ")")
            }
            Node::Binary(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinaryOp::Add => (" + ", 1, 2),
                    BinaryOp::Sub => (" - ", 1, 2),
                    BinaryOp::Mul => ("*", 2, 3),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 3),
                    BinaryOp::Min | BinaryOp::Max => {
                        let name = if *op == BinaryOp::Min { "min" } else { "max" };
                        write!(f, "{name}(")?;
                        self.write(f, a, 0)?;
                        write!(f, ", ")?;
                        self.write(f, b, 0)?;
                        return write!(f, ")");
                    }
                };
                self.write(f, a, lp)?;
                write!(f, "{sym}")?;
                self.write(f, b, rp)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer { sig: &self.sig }.write(f, &self.root, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Arc<Signature> {
        Signature::new(&["u", "x1", "x2", "p", "lambda"])
    }

    fn ev(src: &str, vals: &[f64]) -> Result<f64, EvalError> {
        parse(src, &sig()).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_literals() {
        let v = [0.0, 1.0, 0.0, 3.0, 0.0];
        assert_eq!(ev("2+3*x1", &v).unwrap(), 5.0);
        assert_eq!(ev("-x1^2", &v).unwrap(), -1.0);
        assert_eq!(ev("2^3^2", &v).unwrap(), 512.0);
        assert_eq!(ev("2^-1", &v).unwrap(), 0.5);
        assert_eq!(ev("1.5e1 - 10", &v).unwrap(), 5.0);
        assert_eq!(ev("8/4/2", &v).unwrap(), 1.0);
        assert_eq!(ev("min(x1, 3) + max(x1, 3)", &v).unwrap(), 4.0);
        assert!((ev("cos(pi)", &v).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spec_examples() {
        assert_eq!(ev("exp(u)", &[0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(ev("(1+u)^p", &[1.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), 8.0);
        assert_eq!(ev("x1*x2", &[0.0, 2.0, 3.0, 0.0, 0.0]).unwrap(), 6.0);
    }

    #[test]
    fn domain_errors() {
        let z = [0.0; 5];
        assert!(matches!(ev("log(u)", &z), Err(EvalError::Domain { op: "log", .. })));
        assert!(matches!(ev("1/u", &z), Err(EvalError::Domain { op: "/", .. })));
        assert!(matches!(ev("sqrt(u - 1)", &z), Err(EvalError::Domain { .. })));
        assert!(matches!(ev("exp(1000)", &z), Err(EvalError::Domain { .. })));
    }

    #[test]
    fn batch_reports_index() {
        let s = Signature::new(&["u"]);
        let e = parse("log(u)", &s).unwrap();
        assert_eq!(evaluate_batch(&e, &[vec![1.0]]).unwrap(), vec![0.0]);
        let err = evaluate_batch(&e, &[vec![0.0]]).unwrap_err();
        assert_eq!(err.index, 0);
        let err = evaluate_batch(&e, &[vec![1.0], vec![2.0], vec![-1.0]]).unwrap_err();
        assert_eq!(err.index, 2);
    }

    #[test]
    fn parse_errors() {
        let s = sig();
        match parse("1 + * 2", &s) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("y + 1", &s),
            Err(ExprError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(parse("min(u)", &s), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("exp(u, u)", &s), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("(u", &s), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("u u", &s), Err(ExprError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn printing_round_trips_structure() {
        let s = sig();
        for src in [
            "-u^2",
            "(-u)^2",
            "u - (x1 - x2)",
            "u/(x1*x2)",
            "2^3^2",
            "(2^3)^2",
            "-(-u)",
            "exp(-u)*min(u, -1.5)",
            "u^-2",
        ] {
            let e = parse(src, &s).unwrap();
            let again = parse(&e.to_string(), &s).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
        let neg = Expr::constant(s.clone(), -2.5).mul(&Expr::var(&s, "u").unwrap());
        let back = parse(&neg.to_string(), &s).unwrap();
        assert_eq!(back.eval(&[2.0, 0., 0., 0., 0.]).unwrap(), -5.0);
    }

    #[test]
    fn substitute_variable() {
        let s = Signature::coords(2);
        let e = parse("x1*x2 + x2", &s).unwrap();
        let w = parse("x2 + x1^2", &s).unwrap();
        let r = e.substitute("x2", &w).unwrap();
        assert_eq!(r.eval(&[2.0, 1.0]).unwrap(), 2.0 * 5.0 + 5.0);
        assert!(!parse("x1", &s).unwrap().depends_on("x2"));
    }
}
