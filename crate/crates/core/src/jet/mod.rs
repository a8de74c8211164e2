//! Exact differentiation of test functions through truncated Taylor jets,
//! and the action of the group's vector fields on those jets.

mod expr;
mod taylor;

pub use expr::{parse_expr, Expr, ExprError, Func, Var};
pub use taylor::{Jet, JetError, Layout, DEFAULT_ORDER, MAX_ORDER};

use crate::group::{Field, Point, ValidatedSpec};

/// Jet of `expr` at flat coordinates `center` (`[x.., z..]`).
pub fn eval_jet_coords(expr: &Expr, center: &[f64], n: usize, order: usize) -> Result<Jet, JetError> {
    Ok(match expr {
        Expr::Const(c) => Jet::constant(center, order, *c)?,
        Expr::Var(v) => Jet::coordinate(center, order, v.slot(n))?,
        Expr::Neg(a) => eval_jet_coords(a, center, n, order)?.scale(-1.0),
        Expr::Add(a, b) => {
            eval_jet_coords(a, center, n, order)?.add(&eval_jet_coords(b, center, n, order)?)
        }
        Expr::Sub(a, b) => {
            eval_jet_coords(a, center, n, order)?.sub(&eval_jet_coords(b, center, n, order)?)
        }
        Expr::Mul(a, b) => {
            eval_jet_coords(a, center, n, order)?.mul(&eval_jet_coords(b, center, n, order)?)
        }
        Expr::Pow(a, e) => eval_jet_coords(a, center, n, order)?.powi(*e),
        Expr::Apply(f, a) => {
            let inner = eval_jet_coords(a, center, n, order)?;
            match f {
                Func::Exp => inner.exp(),
                Func::Log => inner.ln()?,
                Func::Sin => inner.sin(),
                Func::Cos => inner.cos(),
            }
        }
    })
}

/// Order-`k` jet of `expr` at `p`.
pub fn eval_jet(expr: &Expr, p: &Point, k: usize) -> Result<Jet, JetError> {
    eval_jet_coords(expr, &p.coords(), p.x.len(), k)
}

/// Jet of `V f` from a jet of `f`; one order is consumed.
///
/// Each frame field has coefficients affine in the coordinates, so
/// `V f = Σ_a (c_a(p) + Σ_b L_ab h_b) ∂_a f` is computed exactly.
pub fn vf_apply(spec: &ValidatedSpec, field: Field, jet: &Jet) -> Result<Jet, JetError> {
    if jet.order() == 0 {
        return Err(JetError::OrderExhausted { needed: 1, have: 0 });
    }
    let affine = spec.field_affine(field);
    let center = jet.center();
    let at_center = affine.eval(center);
    let mut out = Jet::constant(center, jet.order() - 1, 0.0)?;
    for (a, c0) in at_center.iter().enumerate() {
        let row = &affine.linear[a];
        if *c0 == 0.0 && row.iter().all(|v| *v == 0.0) {
            continue;
        }
        let da = jet.partial(a)?;
        out = out.add(&da.scale(*c0));
        for (b, lab) in row.iter().enumerate() {
            if *lab != 0.0 {
                out = out.add(&da.mul_local_coordinate(b).scale(*lab));
            }
        }
    }
    Ok(out)
}

/// `[A, B] f = A(B f) − B(A f)`; consumes two orders.
pub fn bracket(spec: &ValidatedSpec, a: Field, b: Field, jet: &Jet) -> Result<Jet, JetError> {
    if jet.order() < 2 {
        return Err(JetError::OrderExhausted {
            needed: 2,
            have: jet.order(),
        });
    }
    let ab = vf_apply(spec, a, &vf_apply(spec, b, jet)?)?;
    let ba = vf_apply(spec, b, &vf_apply(spec, a, jet)?)?;
    Ok(ab.sub(&ba))
}

/// Central-difference gradient in ambient coordinates, error `O(h²)`.
pub fn numeric_grad(expr: &Expr, p: &Point, h: f64) -> Vec<f64> {
    let n = p.x.len();
    let base = p.coords();
    let mut probe = base.clone();
    (0..base.len())
        .map(|a| {
            probe[a] = base[a] + h;
            let up = expr.eval(&probe, n);
            probe[a] = base[a] - h;
            let down = expr.eval(&probe, n);
            probe[a] = base[a];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{builtin_heisenberg, validate_spec};

    fn heis() -> ValidatedSpec {
        validate_spec(builtin_heisenberg()).unwrap()
    }

    fn p(v: &[f64]) -> Point {
        Point::from_coords(v, 2)
    }

    #[test]
    fn polynomial_jet_against_hand_derivatives() {
        let f = parse_expr("x1^2+z1", 2, 1).unwrap();
        let j = eval_jet(&f, &p(&[1.0, 0.0, 0.0]), 2).unwrap();
        assert_eq!(j.value(), 1.0);
        assert_eq!(j.derivative(&[1, 0, 0]), Some(2.0));
        assert_eq!(j.derivative(&[0, 0, 1]), Some(1.0));
        assert_eq!(j.derivative(&[2, 0, 0]), Some(2.0));
        for alpha in [[0, 1, 0], [1, 1, 0], [0, 2, 0], [0, 0, 2], [1, 0, 1], [0, 1, 1]] {
            assert_eq!(j.derivative(&alpha), Some(0.0), "{alpha:?}");
        }
        assert_eq!(j.derivative(&[3, 0, 0]), None);
    }

    #[test]
    fn constant_has_no_derivatives() {
        let f = parse_expr("3", 2, 1).unwrap();
        let j = eval_jet(&f, &p(&[0.4, -1.0, 2.0]), 3).unwrap();
        assert_eq!(j.value(), 3.0);
        assert!(j.taylor_coefficients()[1..].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn log_domain_error_propagates() {
        let f = parse_expr("log(x1)", 2, 1).unwrap();
        assert!(matches!(
            eval_jet(&f, &p(&[-1.0, 0.0, 0.0]), 1),
            Err(JetError::LogOfNonPositive(_))
        ));
        assert!(matches!(eval_jet(&f, &p(&[1.0, 0.0, 0.0]), 5), Err(JetError::OrderTooHigh(5))));
    }

    #[test]
    fn vector_fields_on_heisenberg_example() {
        let g = heis();
        let f = parse_expr("x1^2+z1", 2, 1).unwrap();
        let j = eval_jet(&f, &p(&[1.0, 0.0, 0.0]), 2).unwrap();
        assert_eq!(vf_apply(&g, Field::X(0), &j).unwrap().value(), 2.0);
        assert_eq!(vf_apply(&g, Field::X(1), &j).unwrap().value(), 0.5);
        assert_eq!(vf_apply(&g, Field::Z(0), &j).unwrap().value(), 1.0);
        assert_eq!(vf_apply(&g, Field::Euler, &j).unwrap().value(), 2.0);
        // X1 f = 2x - y/2 as a jet: derivative in y is -1/2
        let xf = vf_apply(&g, Field::X(0), &j).unwrap();
        assert_eq!(xf.derivative(&[0, 1, 0]), Some(-0.5));
        let j0 = eval_jet(&f, &p(&[1.0, 0.0, 0.0]), 0).unwrap();
        assert!(matches!(vf_apply(&g, Field::Z(0), &j0), Err(JetError::OrderExhausted { .. })));
    }

    #[test]
    fn brackets_on_heisenberg() {
        let g = heis();
        let f = parse_expr("x1^3 - 2*x1*x2*z1 + z1^2*x2 + 0.5*x2^2", 2, 1).unwrap();
        let at = p(&[0.3, -1.1, 0.7]);
        let j = eval_jet(&f, &at, 3).unwrap();
        let zf = vf_apply(&g, Field::Z(0), &j).unwrap();
        let b = bracket(&g, Field::X(0), Field::X(1), &j).unwrap();
        assert!((b.value() - zf.value()).abs() < 1e-12);
        assert!(bracket(&g, Field::Z(0), Field::X(0), &j).unwrap().value().abs() < 1e-12);
        let ze = bracket(&g, Field::Z(0), Field::Euler, &j).unwrap();
        assert!((ze.value() - 2.0 * zf.value()).abs() < 1e-12);
        let j1 = eval_jet(&f, &at, 1).unwrap();
        assert!(matches!(
            bracket(&g, Field::X(0), Field::X(1), &j1),
            Err(JetError::OrderExhausted { needed: 2, have: 1 })
        ));
    }

    #[test]
    fn numeric_gradient_cross_check() {
        let at = p(&[0.2, -0.4, 0.9]);
        for s in ["x1^2+z1", "exp(-(x1^2+x2^2))", "exp(x1)"] {
            let f = parse_expr(s, 2, 1).unwrap();
            let g = numeric_grad(&f, &at, 1e-4);
            let j = eval_jet(&f, &at, 1).unwrap().gradient();
            for (a, b) in g.iter().zip(&j) {
                assert!((a - b).abs() < 1e-6, "{s}: {a} vs {b}");
            }
        }
        let c = parse_expr("7", 2, 1).unwrap();
        assert!(numeric_grad(&c, &at, 1e-4).iter().all(|v| *v == 0.0));
        let lin = parse_expr("3*x1 - 2*z1", 2, 1).unwrap();
        let g = numeric_grad(&lin, &at, 1e-3);
        assert!((g[0] - 3.0).abs() < 1e-9 && (g[2] + 2.0).abs() < 1e-9);
    }
}
