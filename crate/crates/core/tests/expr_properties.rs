mod common;

use std::collections::BTreeMap;

use kladapt::expr::{ray_quadrature_rho, simplify, Expr, Point, Tape};
use proptest::prelude::*;
use rand::RngExt;

use common::{random_expr, random_point, random_polynomial, rng, ESTIMATES, STATES};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplify_preserves_value(seed in any::<u64>()) {
        let mut r = rng(seed);
        let e = random_expr(&mut r, 5);
        let s = simplify(&e);
        for _ in 0..100 {
            let pt = random_point(&mut r, 1.5);
            let (a, b) = (e.eval(&pt).unwrap(), s.eval(&pt).unwrap());
            prop_assert!(close(a, b, 1e-12), "{} -> {}: {} vs {}", e, s, a, b);
        }
    }

    #[test]
    fn substitution_commutes_with_evaluation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let e = random_expr(&mut r, 4);
        let images: Vec<Expr> = (0..STATES).map(|_| random_expr(&mut r, 2)).collect();
        let composed = e.substitute_states(&images);
        for _ in 0..20 {
            let pt = random_point(&mut r, 1.0);
            let inner: Vec<f64> = images.iter().map(|g| g.eval(&pt).unwrap()).collect();
            let direct = e.eval(&Point::new(&inner, &pt.theta_hat)).unwrap();
            prop_assert!(close(composed.eval(&pt).unwrap(), direct, 1e-10));
        }
    }

    #[test]
    fn tape_matches_tree_evaluation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let exprs: Vec<Expr> = (0..3).map(|_| random_expr(&mut r, 5)).collect();
        let tape = Tape::compile(&exprs, &BTreeMap::new()).unwrap();
        for _ in 0..20 {
            let pt = random_point(&mut r, 1.5);
            let v = tape.eval(&pt.x, &pt.theta_hat).unwrap();
            for (e, tv) in exprs.iter().zip(&v) {
                prop_assert!(close(e.eval(&pt).unwrap(), *tv, 1e-12));
            }
        }
    }

    #[test]
    fn product_rule(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_expr(&mut r, 3), random_expr(&mut r, 3));
        let sym = common::random_symbol(&mut r);
        let lhs = (&a * &b).partial(&sym);
        let rhs = a.partial(&sym) * &b + &a * b.partial(&sym);
        let pt = random_point(&mut r, 1.5);
        prop_assert!(close(lhs.eval(&pt).unwrap(), rhs.eval(&pt).unwrap(), 1e-10));
    }
}

/// `|h(x)| ≤ ρ(x)|x|` on 10⁴ points with `|x| ≤ 10`, for polynomials of
/// degree up to 8 that vanish at the origin.
#[test]
fn ray_bound_is_sound() {
    let mut r = rng(7);
    let mut checked = 0;
    while checked < 10_000 {
        let p = random_polynomial(&mut r, 8);
        let at_origin = p.substitute_states(&vec![Expr::zero(); STATES]);
        let h = simplify(&(&p - &at_origin));
        let rho = ray_quadrature_rho(&h, STATES, 16).unwrap();
        let tape = Tape::compile(&[h.clone(), rho.expr().clone()], &BTreeMap::new()).unwrap();
        for _ in 0..500 {
            let dir: Vec<f64> = (0..STATES).map(|_| r.random_range(-1.0..1.0)).collect();
            let len = common::norm(&dir).max(1e-12);
            let radius = r.random_range(0.0..10.0);
            let x: Vec<f64> = dir.iter().map(|d| d * radius / len).collect();
            let th: Vec<f64> = (0..ESTIMATES).map(|_| r.random_range(-3.0..3.0)).collect();
            let v = tape.eval(&x, &th).unwrap();
            let bound = v[1] * common::norm(&x);
            assert!(v[0].abs() <= bound * (1.0 + 1e-9) + 1e-9, "{h}: |h| = {} > {bound} at {x:?}", v[0].abs());
            checked += 1;
        }
    }
}
