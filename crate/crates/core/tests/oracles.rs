use stablab::exprlang::{parse, Nonlinearity, Signature};
use stablab::geometry::{build_grid, reflect_third_order, DomainSpec, ScalarField};
use stablab::operators::CoefficientSpec;
use stablab::solver::{solve_newton, trace_branch, BranchPolicy, Problem};

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if f(c) > f(d) {
            b = d
        } else {
            a = c
        }
    }
    f(0.5 * (a + b))
}

/// `lambda(t) = t^2 / (2 cosh^2(t/4))` parametrises the 1D Gelfand branch on (0, 1).
fn lambda_star_1d() -> f64 {
    golden_max(|t| t * t / (2.0 * (t / 4.0).cosh().powi(2)), 0.1, 20.0)
}

/// On the unit disk the branch is `lambda(m) = 8 m / (1 + m)^2`.
fn lambda_star_disk() -> f64 {
    golden_max(|m| 8.0 * m / (1.0 + m).powi(2), 0.01, 50.0)
}

#[test]
fn gelfand_fold_1d() {
    let want = lambda_star_1d();
    assert!((want - 3.5138).abs() < 1e-3);
    let g = build_grid(&DomainSpec::cube(1, 0.0, 1.0), 1.0 / 512.0).unwrap();
    let p = Problem::new(&g, CoefficientSpec::identity(1), Nonlinearity::exp(), 0.0).unwrap();
    let b = trace_branch(&p, &BranchPolicy::default());
    assert!((b.lambda_star - want).abs() / want < 0.01, "{} vs {want}", b.lambda_star);
}

#[test]
fn gelfand_fold_radial_disk() {
    let want = lambda_star_disk();
    assert!((want - 2.0).abs() < 1e-9);
    let g = build_grid(&DomainSpec::radial(2, 1.0), 1.0 / 400.0).unwrap();
    let p = Problem::new(&g, CoefficientSpec::identity(1), Nonlinearity::exp(), 0.0).unwrap();
    let b = trace_branch(&p, &BranchPolicy::default());
    assert!((b.lambda_star - want).abs() / want < 0.02, "{} vs {want}", b.lambda_star);
}

#[test]
fn manufactured_variable_coefficient_order() {
    let sig = Signature::coords(2);
    let exact = parse("sin(pi*x1)*sin(pi*x2)*exp(x1)", &sig).unwrap();
    let spec = CoefficientSpec::from_strings(&[vec!["1 + 0.1*x1", "0"], vec!["0", "1"]], &["0", "0"]).unwrap();
    let mut errs = Vec::new();
    for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let g = build_grid(&DomainSpec::cube(2, 0.0, 1.0), h).unwrap();
        let p = Problem::new(&g, spec.clone(), Nonlinearity::exp(), 0.3)
            .unwrap()
            .with_manufactured(&exact)
            .unwrap();
        let s = solve_newton(&p, None).unwrap();
        let err = g
            .unknowns()
            .iter()
            .map(|&i| (s.u.get(i) - exact.eval(&g.coords(i)[..2]).unwrap()).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.7, "errors {errs:?}");
    }
}

#[test]
fn reflection_reproduces_cubics() {
    let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 32.0).unwrap();
    let poly = |x: &[f64]| 0.3 + x[0] - 2.0 * x[1] + x[0] * x[1] + 0.7 * x[1].powi(2) - 1.3 * x[1].powi(3);
    let u = ScalarField::from_fn(&g, poly);
    let r = reflect_third_order(&u).unwrap();
    let full = r.field.grid().clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..full.node_count() {
        if full.is_active(i) && !r.clamped.contains(&i) {
            worst = worst.max((r.field.get(i) - poly(&full.coords(i)[..2])).abs());
            checked += 1;
        }
    }
    assert!(checked > r.clamped.len() * 10, "{checked} checked, {} clamped", r.clamped.len());
    assert!(worst <= 1e-10, "worst {worst}");
}
