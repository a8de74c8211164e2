use approx::assert_relative_eq;
use proptest::prelude::*;

use carnot_ou::gamma::OperatorContext;
use carnot_ou::group::{builtin_heisenberg, heisenberg_product, validate_spec, Point, ValidatedSpec};
use carnot_ou::jet::{eval_jet, parse_expr, Expr};

fn heis() -> ValidatedSpec {
    validate_spec(builtin_heisenberg()).unwrap()
}

fn point3() -> impl Strategy<Value = Point> {
    prop::array::uniform3(-3.0f64..3.0).prop_map(|v| Point::from_coords(&v, 2))
}

fn coeffs() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-2.0f64..2.0)
}

/// A small polynomial with one exponential factor, so products and chains
/// are exercised.
fn sample_fn(c: [f64; 5]) -> Expr {
    parse_expr(
        &format!(
            "{}*x1 + {}*x2*z1 + {}*x1^2 + {}*exp(0.3*x2 - 0.2*z1) + {}*z1^2",
            c[0], c[1], c[2], c[3], c[4]
        ),
        2,
        1,
    )
    .unwrap()
}

fn close(a: &Point, b: &Point) {
    for (u, v) in a.coords().iter().zip(b.coords()) {
        assert_relative_eq!(*u, v, epsilon = 1e-9, max_relative = 1e-12);
    }
}

proptest! {
    #[test]
    fn group_is_associative(p in point3(), q in point3(), r in point3()) {
        let g = heis();
        let left = g.group_mul(&g.group_mul(&p, &q).unwrap(), &r).unwrap();
        let right = g.group_mul(&p, &g.group_mul(&q, &r).unwrap()).unwrap();
        close(&left, &right);
    }

    #[test]
    fn inverse_and_identity(p in point3()) {
        let g = heis();
        let inv = g.group_inv(&p).unwrap();
        close(&g.group_mul(&p, &inv).unwrap(), &g.origin());
        close(&g.group_mul(&inv, &p).unwrap(), &g.origin());
        close(&g.group_mul(&g.origin(), &p).unwrap(), &p);
    }

    #[test]
    fn dilations_are_automorphisms(p in point3(), q in point3(), t in 0.1f64..4.0) {
        let g = heis();
        let lhs = g.dilate(t, &g.group_mul(&p, &q).unwrap()).unwrap();
        let rhs = g.group_mul(&g.dilate(t, &p).unwrap(), &g.dilate(t, &q).unwrap()).unwrap();
        close(&lhs, &rhs);
    }

    #[test]
    fn product_group_is_associative(v in prop::array::uniform18(-2.0f64..2.0)) {
        let g = validate_spec(heisenberg_product(2)).unwrap();
        let p = Point::from_coords(&v[0..6], 4);
        let q = Point::from_coords(&v[6..12], 4);
        let r = Point::from_coords(&v[12..18], 4);
        let left = g.group_mul(&g.group_mul(&p, &q).unwrap(), &r).unwrap();
        let right = g.group_mul(&p, &g.group_mul(&q, &r).unwrap()).unwrap();
        close(&left, &right);
    }

    #[test]
    fn gamma_leibniz_rule(a in coeffs(), b in coeffs(), c in coeffs(), p in point3()) {
        let ctx = OperatorContext::new(heis(), 1.0).unwrap();
        let (f, g, h) = (sample_fn(a), sample_fn(b), sample_fn(c));
        let (jf, jg, jh) = (eval_jet(&f, &p, 1).unwrap(), eval_jet(&g, &p, 1).unwrap(), eval_jet(&h, &p, 1).unwrap());
        for gamma in [OperatorContext::gamma_jet, OperatorContext::gamma_z_jet] {
            let lhs = gamma(&ctx, &jf.mul(&jg), &jh).unwrap().value();
            let rhs = jf.value() * gamma(&ctx, &jg, &jh).unwrap().value()
                + jg.value() * gamma(&ctx, &jf, &jh).unwrap().value();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-10);
        }
    }

    #[test]
    fn generator_is_a_diffusion(a in coeffs(), b in coeffs(), p in point3(), s in 0.0f64..3.0) {
        // L(fg) = f Lg + g Lf + 2Γ(f, g).
        let ctx = OperatorContext::new(heis(), s).unwrap();
        let (jf, jg) = (eval_jet(&sample_fn(a), &p, 2).unwrap(), eval_jet(&sample_fn(b), &p, 2).unwrap());
        let lhs = ctx.l_jet(&jf.mul(&jg)).unwrap().value();
        let rhs = jf.value() * ctx.l_jet(&jg).unwrap().value()
            + jg.value() * ctx.l_jet(&jf).unwrap().value()
            + 2.0 * ctx.gamma_jet(&jf, &jg).unwrap().value();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-8, max_relative = 1e-10);
    }

    #[test]
    fn gamma_is_nonnegative_and_symmetric(a in coeffs(), b in coeffs(), p in point3()) {
        let ctx = OperatorContext::new(heis(), 1.0).unwrap();
        let (f, g) = (sample_fn(a), sample_fn(b));
        prop_assert!(ctx.gamma(&f, &f, &p).unwrap() >= 0.0);
        prop_assert!(ctx.gamma_z(&f, &f, &p).unwrap() >= 0.0);
        assert_relative_eq!(ctx.gamma(&f, &g, &p).unwrap(), ctx.gamma(&g, &f, &p).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn parsed_expressions_round_trip(a in coeffs(), p in point3()) {
        let f = sample_fn(a);
        let again = parse_expr(&f.to_string(), 2, 1).unwrap();
        let coords = p.coords();
        assert_relative_eq!(f.eval(&coords, 2), again.eval(&coords, 2), max_relative = 1e-12);
    }
}
