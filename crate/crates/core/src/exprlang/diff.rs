use super::{BinaryOp, Expr, ExprError, Node, UnaryOp};

// Smart constructors with the folding needed to keep derivatives readable.
// Constant folding only happens when the result is finite.

fn fold(op: BinaryOp, a: f64, b: f64) -> Option<f64> {
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        _ => return None,
    };
    v.is_finite().then_some(v)
}

fn bin(op: BinaryOp, a: Node, b: Node) -> Node {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(v) = fold(op, x, y) {
            return Node::Const(v);
        }
    }
    Node::Binary(op, Box::new(a), Box::new(b))
}

pub(crate) fn add(a: Node, b: Node) -> Node {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => bin(BinaryOp::Add, a, b),
    }
}

pub(crate) fn sub(a: Node, b: Node) -> Node {
    match (a.as_const(), b.as_const()) {
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => bin(BinaryOp::Sub, a, b),
    }
}

pub(crate) fn mul(a: Node, b: Node) -> Node {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Node::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => bin(BinaryOp::Mul, a, b),
    }
}

pub(crate) fn div(a: Node, b: Node) -> Node {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) if x == 0.0 => Node::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Node::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Unary(UnaryOp::Neg, inner) => *inner,
        other => Node::Unary(UnaryOp::Neg, Box::new(other)),
    }
}

fn un(op: UnaryOp, a: Node) -> Node {
    Node::Unary(op, Box::new(a))
}

fn pow(a: Node, b: Node) -> Node {
    match b.as_const() {
        Some(y) if y == 1.0 => a,
        Some(y) if y == 0.0 => Node::Const(1.0),
        _ => Node::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn d(node: &Node, var: usize) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
        Node::Unary(op, a) => {
            let da = d(a, var);
            if da.as_const() == Some(0.0) {
                return Node::Const(0.0);
            }
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => neg(da),
                UnaryOp::Exp => mul(un(UnaryOp::Exp, a), da),
                UnaryOp::Log => div(da, a),
                UnaryOp::Sqrt => div(da, mul(Node::Const(2.0), un(UnaryOp::Sqrt, a))),
                // Subgradient choice: sign(0) = 0.
                UnaryOp::Abs => mul(un(UnaryOp::Sign, a), da),
                UnaryOp::Sign => Node::Const(0.0),
                UnaryOp::Sin => mul(un(UnaryOp::Cos, a), da),
                UnaryOp::Cos => neg(mul(un(UnaryOp::Sin, a), da)),
            }
        }
        Node::Binary(op, a, b) => {
            let da = d(a, var);
            let db = d(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                BinaryOp::Div => sub(div(da, b.clone()), div(mul(a, db), mul(b.clone(), b))),
                BinaryOp::Pow => {
                    if !b.depends_on(var) {
                        // b * a^(b-1) * a'
                        let e = sub(b.clone(), Node::Const(1.0));
                        mul(mul(b, pow(a, e)), da)
                    } else {
                        // a^b * (b' log a + b a'/a)
                        let whole = node_pow(a.clone(), b.clone());
                        let t1 = mul(db, un(UnaryOp::Log, a.clone()));
                        let t2 = div(mul(b, da), a);
                        mul(whole, add(t1, t2))
                    }
                }
                BinaryOp::Min | BinaryOp::Max => {
                    // min/max(a, b) = (a + b -/+ |a - b|) / 2
                    let s = un(UnaryOp::Sign, sub(a, b));
                    let jump = mul(s, sub(da.clone(), db.clone()));
                    let sum = add(da, db);
                    let num = if *op == BinaryOp::Min { sub(sum, jump) } else { add(sum, jump) };
                    mul(Node::Const(0.5), num)
                }
            }
        }
    }
}

fn node_pow(a: Node, b: Node) -> Node {
    Node::Binary(BinaryOp::Pow, Box::new(a), Box::new(b))
}

/// Symbolic derivative with respect to the declared variable `var`.
///
/// `abs` differentiates to `sign`, so the derivative at a kink is 0;
/// `min`/`max` use the average of both branches on ties.
pub fn differentiate(e: &Expr, var: &str) -> Result<Expr, ExprError> {
    let i = e
        .signature()
        .index_of(var)
        .ok_or_else(|| ExprError::UndeclaredVariable(var.to_string()))?;
    Ok(Expr::from_node(e.signature().clone(), d(e.node(), i)))
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Signature};
    use super::*;

    #[test]
    fn basic_rules() {
        let s = Signature::new(&["u"]);
        let de = differentiate(&parse("exp(u)", &s).unwrap(), "u").unwrap();
        assert_eq!(de, parse("exp(u)", &s).unwrap());
        let d5 = differentiate(&parse("5", &s).unwrap(), "u").unwrap();
        assert_eq!(d5.as_const(), Some(0.0));
        let dc = differentiate(&parse("(1+u)^3", &s).unwrap(), "u").unwrap();
        assert_eq!(dc.eval(&[0.0]).unwrap(), 3.0);
        let da = differentiate(&parse("abs(u)", &s).unwrap(), "u").unwrap();
        assert_eq!(da.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(da.eval(&[-2.0]).unwrap(), -1.0);
        assert!(differentiate(&parse("u", &s).unwrap(), "v").is_err());
    }

    #[test]
    fn matches_central_differences() {
        let s = Signature::new(&["u", "x1"]);
        let cases = [
            "exp(u)*sin(x1*u)",
            "log(1 + u^2)/sqrt(2 + x1^2)",
            "(1+u^2)^(x1 + 0.5)",
            "u^3 - 4*u/x1",
            "max(u, x1)*min(u^2, 3)",
            "cos(exp(-u^2))",
        ];
        for src in cases {
            let e = parse(src, &s).unwrap();
            let du = differentiate(&e, "u").unwrap();
            for k in 0..50 {
                let u = 0.3 + 0.037 * k as f64;
                let x = 1.1 + 0.013 * k as f64;
                let h = 1e-6 * (1.0 + u.abs());
                let fd = (e.eval(&[u + h, x]).unwrap() - e.eval(&[u - h, x]).unwrap()) / (2.0 * h);
                let sym = du.eval(&[u, x]).unwrap();
                assert!(
                    (fd - sym).abs() <= 1e-6 * sym.abs().max(1.0),
                    "{src} at u={u}: {fd} vs {sym}"
                );
            }
        }
    }
}
