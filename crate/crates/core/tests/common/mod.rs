//! Shared helpers for the integration tests.
#![allow(dead_code)]

use kladapt::expr::{Expr, Point, Symbol};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STATES: usize = 3;
pub const ESTIMATES: usize = 2;

/// Random polynomial or quotient of depth at most `depth`.
///
/// Quotients use denominators of the form `1 + e²` so every expression is
/// defined everywhere.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return leaf(rng);
    }
    match rng.random_range(0..5) {
        0 => {
            let k = rng.random_range(2..=3);
            Expr::sum((0..k).map(|_| random_expr(rng, depth - 1)))
        }
        1 => random_expr(rng, depth - 1) * random_expr(rng, depth - 1),
        2 => random_expr(rng, depth - 1).powi(rng.random_range(2..=3)),
        3 => {
            let den = 1.0 + random_expr(rng, depth - 1).square();
            random_expr(rng, depth - 1) / den
        }
        _ => rng.random_range(-2.0..2.0) * random_expr(rng, depth - 1),
    }
}

fn leaf<R: Rng>(rng: &mut R) -> Expr {
    match rng.random_range(0..4) {
        0 => Expr::constant((rng.random_range(-20.0f64..20.0)).round() / 10.0),
        1 => Expr::estimate(rng.random_range(0..ESTIMATES)),
        _ => Expr::state(rng.random_range(0..STATES)),
    }
}

pub fn random_point<R: Rng>(rng: &mut R, half_width: f64) -> Point {
    let x: Vec<f64> = (0..STATES).map(|_| rng.random_range(-half_width..half_width)).collect();
    let th: Vec<f64> = (0..ESTIMATES).map(|_| rng.random_range(-half_width..half_width)).collect();
    Point::new(&x, &th)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central difference of `e` along `sym` at `pt`.
pub fn central_difference(e: &Expr, sym: &Symbol, pt: &Point, h: f64) -> Option<f64> {
    let mut lo = pt.clone();
    let mut hi = pt.clone();
    match sym {
        Symbol::State(i) => {
            lo.x[*i] -= h;
            hi.x[*i] += h;
        }
        Symbol::Estimate(j) => {
            lo.theta_hat[*j] -= h;
            hi.theta_hat[*j] += h;
        }
        Symbol::Named(_) => return None,
    }
    Some((e.eval(&hi).ok()? - e.eval(&lo).ok()?) / (2.0 * h))
}

pub fn random_symbol<R: Rng>(rng: &mut R) -> Symbol {
    if rng.random_bool(0.7) {
        Symbol::State(rng.random_range(0..STATES))
    } else {
        Symbol::Estimate(rng.random_range(0..ESTIMATES))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Sum of up to six random monomials of total degree at most `degree`.
pub fn random_polynomial<R: Rng>(rng: &mut R, degree: u32) -> Expr {
    let terms = rng.random_range(1..=6);
    Expr::sum((0..terms).map(|_| {
        let c = (rng.random_range(-30.0f64..30.0)).round() / 10.0;
        let d = rng.random_range(0..=degree);
        let factors: Vec<Expr> = (0..d)
            .map(|_| if rng.random_bool(0.8) { Expr::state(rng.random_range(0..STATES)) } else { Expr::estimate(rng.random_range(0..ESTIMATES)) })
            .collect();
        c * Expr::product(factors)
    }))
}
