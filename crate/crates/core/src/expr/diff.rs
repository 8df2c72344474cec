use std::collections::HashMap;

use super::{Expr, Node, Symbol};

impl Expr {
    /// Exact partial derivative with respect to `sym`.
    ///
    /// Shared subtrees are differentiated once.
    pub fn partial(&self, sym: &Symbol) -> Expr {
        let mut memo = HashMap::new();
        partial_rec(self, sym, &mut memo)
    }

    /// Gradient with respect to the given symbols.
    pub fn gradient(&self, syms: &[Symbol]) -> Vec<Expr> {
        syms.iter().map(|s| self.partial(s)).collect()
    }
}

fn partial_rec(e: &Expr, sym: &Symbol, memo: &mut HashMap<*const (), Expr>) -> Expr {
    if let Some(d) = memo.get(&e.ptr()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Sym(s) => {
            if s == sym {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(xs) => Expr::sum(xs.iter().map(|x| partial_rec(x, sym, memo))),
        Node::Mul(xs) => {
            let mut terms = Vec::new();
            for (i, xi) in xs.iter().enumerate() {
                let dxi = partial_rec(xi, sym, memo);
                if dxi.is_zero() {
                    continue;
                }
                let mut factors: Vec<Expr> = Vec::with_capacity(xs.len());
                for (j, xj) in xs.iter().enumerate() {
                    factors.push(if i == j { dxi.clone() } else { xj.clone() });
                }
                terms.push(Expr::product(factors));
            }
            Expr::sum(terms)
        }
        Node::Pow(b, k) => {
            let db = partial_rec(b, sym, memo);
            if db.is_zero() {
                Expr::zero()
            } else {
                Expr::product([Expr::constant(*k as f64), b.powi(k - 1), db])
            }
        }
        Node::Div(a, b) => {
            let da = partial_rec(a, sym, memo);
            let db = partial_rec(b, sym, memo);
            if db.is_zero() {
                da.div(b)
            } else {
                (&da * b - a * &db).div(&b.square())
            }
        }
        Node::Sqrt(a) => {
            let da = partial_rec(a, sym, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                da.div(&(2.0 * e))
            }
        }
    };
    memo.insert(e.ptr(), d.clone());
    d
}
