use super::{CoefficientSpec, OperatorError};
use crate::exprlang::{differentiate, Expr, Node, UnaryOp, BinaryOp};

fn has_kink(node: &Node) -> bool {
    match node {
        Node::Const(_) | Node::Var(_) => false,
        Node::Unary(UnaryOp::Abs | UnaryOp::Sign, _) => true,
        Node::Binary(BinaryOp::Min | BinaryOp::Max, _, _) => true,
        Node::Unary(_, a) => has_kink(a),
        Node::Binary(_, a, b) => has_kink(a) || has_kink(b),
    }
}

/// Coefficients after the graph shear `Phi(x) = (x', x_n - gamma(x'))`,
/// which maps `{x_n > gamma(x')}` onto `{y_n > 0}`.
///
/// With `D = DPhi`, the new operator has `a~ = D A D^T` and
/// `b~ = D b + (a_ij d_ij Phi)`, where only `Phi^n` has a Hessian
/// (`-D^2 gamma`). Everything is composed with `Phi^{-1}` by substituting
/// `x_n -> x_n + gamma(x')`.
pub fn flatten(gamma: &Expr, spec: &CoefficientSpec) -> Result<CoefficientSpec, OperatorError> {
    let n = spec.dim();
    let xn = format!("x{n}");
    let sig = spec.a_expr(0, 0).signature().clone();
    if **gamma.signature() != *sig {
        return Err(OperatorError::Expr(crate::exprlang::ExprError::SignatureMismatch));
    }
    if gamma.depends_on(&xn) {
        return Err(OperatorError::NonSmoothGraph(format!("depends on {xn}")));
    }
    if has_kink(gamma.node()) {
        return Err(OperatorError::NonSmoothGraph(gamma.to_string()));
    }
    let m = n - 1;
    let zero = Expr::constant(sig.clone(), 0.0);
    let one = Expr::constant(sig.clone(), 1.0);
    let mut grad = Vec::with_capacity(m);
    let mut hess = vec![vec![zero.clone(); m]; m];
    for k in 0..m {
        let dk = differentiate(gamma, &format!("x{}", k + 1))?;
        for l in 0..m {
            hess[k][l] = differentiate(&dk, &format!("x{}", l + 1))?;
        }
        grad.push(dk);
    }
    // Rows of DPhi.
    let dphi = |i: usize, k: usize| -> Expr {
        if i < m {
            if i == k { one.clone() } else { zero.clone() }
        } else if k < m {
            grad[k].neg()
        } else {
            one.clone()
        }
    };
    let a = |i: usize, j: usize| spec.a_expr(i, j).clone();
    let mut a_new = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut acc = zero.clone();
            for k in 0..n {
                for l in 0..n {
                    acc = acc.add(&dphi(i, k).mul(&a(k, l)).mul(&dphi(j, l)));
                }
            }
            a_new.push(acc);
        }
    }
    let mut b_new = Vec::new();
    for i in 0..n {
        let mut acc = zero.clone();
        for k in 0..n {
            acc = acc.add(&dphi(i, k).mul(spec.b_expr(k)));
        }
        if i == m {
            for k in 0..m {
                for l in 0..m {
                    acc = acc.sub(&a(k, l).mul(&hess[k][l]));
                }
            }
        }
        b_new.push(acc);
    }
    // Compose with Phi^{-1}.
    let shifted = Expr::var(&sig, &xn)?.add(gamma);
    let pull = |e: Expr| e.substitute(&xn, &shifted);
    let a_new = a_new.into_iter().map(pull).collect::<Result<Vec<_>, _>>()?;
    let b_new = b_new.into_iter().map(pull).collect::<Result<Vec<_>, _>>()?;
    CoefficientSpec::new(n, a_new, b_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse, Signature};

    #[test]
    fn zero_graph_is_identity() {
        let s = CoefficientSpec::identity(2);
        let g = parse("0", &Signature::coords(2)).unwrap();
        let f = flatten(&g, &s).unwrap();
        assert!(f.is_laplacian());
    }

    #[test]
    fn linear_graph() {
        let alpha = 0.7;
        let g = parse(&format!("{alpha}*x1"), &Signature::coords(2)).unwrap();
        let f = flatten(&g, &CoefficientSpec::identity(2)).unwrap();
        let x = [0.2, 0.4];
        let a = f.a_at(&x).unwrap();
        assert!((a.get(1, 1) - (1.0 + alpha * alpha)).abs() < 1e-15);
        assert!((a.get(0, 1) + alpha).abs() < 1e-15);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(&f.b_at(&x).unwrap()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn quadratic_graph_drift() {
        let beta = 0.4;
        let g = parse(&format!("{beta}*x1^2"), &Signature::coords(2)).unwrap();
        let f = flatten(&g, &CoefficientSpec::identity(2)).unwrap();
        for x in [[0.0, 0.1], [0.5, 0.3], [-0.3, 0.8]] {
            assert!((f.b_at(&x).unwrap()[1] + 2.0 * beta).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        let s = CoefficientSpec::identity(2);
        let sig = Signature::coords(2);
        assert!(flatten(&parse("abs(x1)", &sig).unwrap(), &s).is_err());
        assert!(flatten(&parse("x2", &sig).unwrap(), &s).is_err());
    }
}
