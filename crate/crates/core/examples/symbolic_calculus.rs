//! Parse, differentiate, simplify and compile an expression, then build its
//! ray growth bound.

use std::collections::BTreeMap;

use kladapt::expr::{ray_quadrature_rho, simplify, Expr, Point, Symbol, Tape};

fn main() {
    let h = Expr::parse("(+ (* th1 (^ x1 2)) (* x1 x2) (/ x2 (+ 1 (^ x1 2))))").expect("valid expression");
    println!("h        = {h}");
    for i in 0..2 {
        let d = h.partial(&Symbol::State(i));
        println!("dh/dx{}   = {}  (simplified: {})", i + 1, d, simplify(&d));
    }

    let tape = Tape::compile(&[h.clone(), h.partial(&Symbol::State(0))], &BTreeMap::new()).expect("compiles");
    let v = tape.eval(&[0.5, -1.0], &[2.0]).expect("finite");
    println!("h, dh/dx1 at x = (0.5, -1), th = 2: {v:?} ({} tape slots)", tape.len());

    let rho = ray_quadrature_rho(&h, 2, 16).expect("h vanishes at x = 0");
    for x in [[0.5, -1.0], [3.0, 2.0], [-4.0, 0.1]] {
        let pt = Point::new(&x, &[2.0]);
        let hv = h.eval(&pt).unwrap().abs();
        let bound = rho.eval(&pt).unwrap() * (x[0] * x[0] + x[1] * x[1]).sqrt();
        println!("x = {x:?}: |h| = {hv:.4} <= rho |x| = {bound:.4}");
    }
}
